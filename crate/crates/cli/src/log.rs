//! One JSON object per line on stderr.

use serde_json::{Map, Value};

pub struct Logger {
    command: &'static str,
    quiet: bool,
}

impl Logger {
    pub fn new(command: &'static str, quiet: bool) -> Self {
        Self { command, quiet }
    }

    fn emit(&self, level: &str, event: &str, fields: &[(&str, Value)]) {
        if self.quiet {
            return;
        }
        let mut m = Map::new();
        m.insert("level".into(), level.into());
        m.insert("cmd".into(), self.command.into());
        m.insert("event".into(), event.into());
        for (k, v) in fields {
            m.insert((*k).into(), v.clone());
        }
        eprintln!("{}", Value::Object(m));
    }

    pub fn info(&self, event: &str, fields: &[(&str, Value)]) {
        self.emit("info", event, fields);
    }

    pub fn warn(&self, event: &str, fields: &[(&str, Value)]) {
        self.emit("warn", event, fields);
    }

    pub fn error(&self, event: &str, fields: &[(&str, Value)]) {
        self.emit("error", event, fields);
    }
}
