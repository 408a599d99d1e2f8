use crate::scalar::Scalar;

/// Tapering function applied to analysis blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WindowKind {
    #[default]
    Hann,
    Rectangular,
}

impl WindowKind {
    pub fn build<T: Scalar>(self, len: usize) -> Vec<T> {
        match self {
            WindowKind::Hann => hann(len),
            WindowKind::Rectangular => vec![T::one(); len],
        }
    }
}

/// Periodic Hann window.
pub fn hann<T: Scalar>(len: usize) -> Vec<T> {
    let n = len as f64;
    (0..len).map(|i| T::of(0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n).cos())).collect()
}
