use std::fmt::Write as _;

/// One training iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterRecord {
    pub iter: usize,
    pub lr: f64,
    pub d_loss: f64,
    pub g_loss: f64,
    /// Condition accuracy over the real and fake halves of the batch.
    pub d_acc: f64,
    /// Speaker-id accuracy on real inputs; NaN for models without that head.
    pub sid_acc: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GanTrainReport {
    pub records: Vec<IterRecord>,
}

impl GanTrainReport {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn lr_trace(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.lr).collect()
    }

    /// Mean of `f` over the last `n` records.
    pub fn tail_mean(&self, n: usize, f: impl Fn(&IterRecord) -> f64) -> f64 {
        let tail = &self.records[self.records.len().saturating_sub(n)..];
        tail.iter().map(f).sum::<f64>() / tail.len().max(1) as f64
    }

    pub fn all_finite(&self) -> bool {
        self.records
            .iter()
            .all(|r| r.lr.is_finite() && r.d_loss.is_finite() && r.g_loss.is_finite() && r.d_acc.is_finite())
    }

    /// Whitespace-separated `iter lr d_loss g_loss d_acc sid_acc` lines.
    pub fn to_lines(&self) -> String {
        let mut out = String::from("# iter lr d_loss g_loss d_acc sid_acc\n");
        for r in &self.records {
            let _ = writeln!(out, "{} {:e} {} {} {} {}", r.iter, r.lr, r.d_loss, r.g_loss, r.d_acc, r.sid_acc);
        }
        out
    }
}
