use std::fmt;
use std::str::FromStr;

use crate::nn::{Graph, Result, Var};
use crate::scalar::Scalar;

/// Generator objective against the condition output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GeneratorLoss {
    /// Minimize `-log D(fake)`.
    #[default]
    NonSaturating,
    /// Minimize `log(1 - D(fake))`, the literal minimax form.
    Minimax,
}

impl fmt::Display for GeneratorLoss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GeneratorLoss::NonSaturating => "non-saturating",
            GeneratorLoss::Minimax => "minimax",
        })
    }
}

impl FromStr for GeneratorLoss {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "non-saturating" | "nonsaturating" => Ok(Self::NonSaturating),
            "minimax" => Ok(Self::Minimax),
            other => Err(format!("unknown generator loss {other:?}")),
        }
    }
}

/// `BCE(D(real), 1) + BCE(D(fake), 0)`, each averaged over the batch.
/// Minimizing it ascends `log D(real) + log(1 - D(fake))`.
pub fn dcgan_d_loss<T: Scalar>(g: &mut Graph<T>, d_real: Var, d_fake: Var) -> Result<Var> {
    let ones = vec![T::one(); g.value(d_real).len()];
    let zeros = vec![T::zero(); g.value(d_fake).len()];
    let r = g.bce(d_real, &ones)?;
    let f = g.bce(d_fake, &zeros)?;
    g.add(r, f)
}

pub fn dcgan_g_loss<T: Scalar>(g: &mut Graph<T>, d_fake: Var, kind: GeneratorLoss) -> Result<Var> {
    let n = g.value(d_fake).len();
    Ok(match kind {
        GeneratorLoss::NonSaturating => g.bce(d_fake, &vec![T::one(); n])?,
        GeneratorLoss::Minimax => {
            let l = g.bce(d_fake, &vec![T::zero(); n])?;
            g.scale(l, -T::one())
        }
    })
}

/// Condition loss on real and fake plus speaker-id loss on both, the
/// speaker targets being the flattened one-hot rows of the batch.
pub fn sbg_d_loss<T: Scalar>(
    g: &mut Graph<T>,
    cond_real: Var,
    cond_fake: Var,
    sid_real: Var,
    sid_fake: Var,
    onehot: &[T],
) -> Result<Var> {
    let c = dcgan_d_loss(g, cond_real, cond_fake)?;
    let sr = g.bce(sid_real, onehot)?;
    let sf = g.bce(sid_fake, onehot)?;
    let s = g.add(sr, sf)?;
    g.add(c, s)
}

/// Generator: fool the condition head while keeping the speaker head on target.
pub fn sbg_g_loss<T: Scalar>(
    g: &mut Graph<T>,
    cond_fake: Var,
    sid_fake: Var,
    onehot: &[T],
    kind: GeneratorLoss,
) -> Result<Var> {
    let c = dcgan_g_loss(g, cond_fake, kind)?;
    let s = g.bce(sid_fake, onehot)?;
    g.add(c, s)
}
