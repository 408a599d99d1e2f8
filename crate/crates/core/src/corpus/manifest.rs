use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use super::{parse_fields, CorpusError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Group {
    Control,
    Target,
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Group::Control => "control",
            Group::Target => "target",
        })
    }
}

impl FromStr for Group {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "control" => Ok(Group::Control),
            "target" => Ok(Group::Target),
            other => Err(format!("unknown group {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub utt_id: String,
    pub speaker_id: String,
    pub group: Group,
    pub audio_path: String,
    /// Seconds.
    pub duration: f64,
    pub word_id: Option<String>,
    /// Free-form corpus tag (severity block, session, ...).
    pub tag: Option<String>,
}

/// Ordered list of utterances with unique ids.
///
/// On disk: one utterance per line, tab-separated `key=value` fields
/// `id`, `speaker`, `group`, `path`, `duration` and optionally `word`,
/// `tag`. Blank lines and lines starting with `#` are ignored.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub utterances: Vec<Utterance>,
}

impl Manifest {
    pub fn new(utterances: Vec<Utterance>) -> Result<Self> {
        let mut seen = HashSet::new();
        for u in &utterances {
            if !seen.insert(u.utt_id.as_str()) {
                return Err(CorpusError::DuplicateUtterance(u.utt_id.clone()));
            }
            if !(u.duration > 0.0 && u.duration.is_finite()) {
                return Err(CorpusError::ZeroDuration(u.utt_id.clone()));
            }
        }
        Ok(Self { utterances })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut utts = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| CorpusError::Parse { line: lineno, msg };
            let (mut id, mut speaker, mut group, mut path, mut duration, mut word, mut tag) =
                (None, None, None, None, None, None, None);
            for (k, v) in parse_fields(line, lineno)? {
                match k {
                    "id" => id = Some(v.to_string()),
                    "speaker" => speaker = Some(v.to_string()),
                    "group" => group = Some(v.parse::<Group>().map_err(err)?),
                    "path" => path = Some(v.to_string()),
                    "duration" => duration = Some(v.parse::<f64>().map_err(|e| err(format!("duration: {e}")))?),
                    "word" => word = Some(v.to_string()),
                    "tag" => tag = Some(v.to_string()),
                    other => return Err(err(format!("unknown field {other:?}"))),
                }
            }
            let need = |name: &str| err(format!("missing field {name:?}"));
            utts.push(Utterance {
                utt_id: id.ok_or_else(|| need("id"))?,
                speaker_id: speaker.ok_or_else(|| need("speaker"))?,
                group: group.ok_or_else(|| need("group"))?,
                audio_path: path.ok_or_else(|| need("path"))?,
                duration: duration.ok_or_else(|| need("duration"))?,
                word_id: word,
                tag,
            });
        }
        Self::new(utts)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for u in &self.utterances {
            out.push_str(&format!(
                "id={}\tspeaker={}\tgroup={}\tpath={}\tduration={}",
                u.utt_id, u.speaker_id, u.group, u.audio_path, u.duration
            ));
            if let Some(w) = &u.word_id {
                out.push_str(&format!("\tword={w}"));
            }
            if let Some(t) = &u.tag {
                out.push_str(&format!("\ttag={t}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn get(&self, utt_id: &str) -> Option<&Utterance> {
        self.utterances.iter().find(|u| u.utt_id == utt_id)
    }

    pub fn group(&self, group: Group) -> impl Iterator<Item = &Utterance> {
        self.utterances.iter().filter(move |u| u.group == group)
    }

    /// Target speakers in first-appearance order.
    pub fn target_speakers(&self) -> Vec<String> {
        let mut seen = Vec::<String>::new();
        for u in self.group(Group::Target) {
            if !seen.contains(&u.speaker_id) {
                seen.push(u.speaker_id.clone());
            }
        }
        seen
    }

    pub fn speaker_utterances<'a>(&'a self, speaker: &'a str) -> impl Iterator<Item = &'a Utterance> + 'a {
        self.utterances.iter().filter(move |u| u.speaker_id == speaker)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "# corpus\n\
id=c1\tspeaker=CM01\tgroup=control\tpath=a/c1.wav\tduration=1.25\tword=UW1\n\
id=t1\tspeaker=F02\tgroup=target\tpath=b/t1 x.wav\tduration=2.5\tword=UW1\ttag=VL\n\
\n";

    #[test]
    fn parses_and_round_trips() {
        let m = Manifest::parse(SAMPLE).unwrap();
        assert_eq!(m.utterances.len(), 2);
        assert_eq!(m.utterances[1].audio_path, "b/t1 x.wav");
        assert_eq!(m.utterances[1].tag.as_deref(), Some("VL"));
        assert_eq!(m.target_speakers(), vec!["F02".to_string()]);
        assert_eq!(Manifest::parse(&m.to_text()).unwrap(), m);
    }

    #[test]
    fn rejects_bad_records() {
        assert!(matches!(
            Manifest::parse("id=a\tspeaker=s\tgroup=control\tpath=p\tduration=1\nid=a\tspeaker=s\tgroup=control\tpath=p\tduration=1\n"),
            Err(CorpusError::DuplicateUtterance(_))
        ));
        assert!(matches!(
            Manifest::parse("id=a\tspeaker=s\tgroup=control\tpath=p\tduration=0\n"),
            Err(CorpusError::ZeroDuration(_))
        ));
        assert!(matches!(
            Manifest::parse("id=a\tspeaker=s\tgroup=elderly\tpath=p\tduration=1\n"),
            Err(CorpusError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            Manifest::parse("id=a\tspeaker=s\tgroup=control\tpath=p\tduration=1\tcolor=red\n"),
            Err(CorpusError::Parse { .. })
        ));
        assert!(matches!(Manifest::parse("id=a\tspeaker=s\n"), Err(CorpusError::Parse { .. })));
    }
}
