//! Exact arithmetic on the decimal text of report numbers.
//!
//! Report values are written as short decimals; summing or binning them in
//! binary floating point drifts (`0.3 / 0.1 < 3`). These helpers work on the
//! shortest round-trip decimal form of each `f64` instead.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Decimal {
    mantissa: i128,
    scale: u32,
}

const MAX_SCALE: u32 = 30;

impl Decimal {
    pub(crate) fn from_f64(x: f64) -> Option<Self> {
        if !x.is_finite() {
            return None;
        }
        let text = x.to_string();
        let (neg, body) = match text.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, text.as_str()),
        };
        let (int, frac) = body.split_once('.').unwrap_or((body, ""));
        let scale = frac.len() as u32;
        if scale > MAX_SCALE || int.len() + frac.len() > 36 {
            return None;
        }
        let digits: i128 = format!("{int}{frac}").parse().ok()?;
        Some(Self { mantissa: if neg { -digits } else { digits }, scale })
    }

    fn rescale(self, scale: u32) -> Option<Self> {
        let factor = 10i128.checked_pow(scale - self.scale)?;
        Some(Self { mantissa: self.mantissa.checked_mul(factor)?, scale })
    }

    fn align(a: Self, b: Self) -> Option<(Self, Self)> {
        let s = a.scale.max(b.scale);
        Some((a.rescale(s)?, b.rescale(s)?))
    }

    pub(crate) fn add(self, other: Self) -> Option<Self> {
        let (a, b) = Self::align(self, other)?;
        Some(Self { mantissa: a.mantissa.checked_add(b.mantissa)?, scale: a.scale })
    }

    pub(crate) fn mul_int(self, k: i64) -> Option<Self> {
        Some(Self { mantissa: self.mantissa.checked_mul(i128::from(k))?, scale: self.scale })
    }

    /// `floor(self / other)`; `other` must be positive.
    pub(crate) fn floor_div(self, other: Self) -> Option<i64> {
        let (a, b) = Self::align(self, other)?;
        if b.mantissa <= 0 {
            return None;
        }
        i64::try_from(a.mantissa.div_euclid(b.mantissa)).ok()
    }

    pub(crate) fn to_f64(self) -> f64 {
        let digits = self.mantissa.unsigned_abs().to_string();
        let scale = self.scale as usize;
        let padded = format!("{:0>width$}", digits, width = scale + 1);
        let (int, frac) = padded.split_at(padded.len() - scale);
        let sign = if self.mantissa < 0 { "-" } else { "" };
        format!("{sign}{int}.{frac}0").parse().unwrap_or(f64::NAN)
    }
}

/// `floor(x / w)` in decimal arithmetic, falling back to floating point for
/// numbers without a short decimal form.
pub(crate) fn bin_index(x: f64, w: f64) -> i64 {
    Decimal::from_f64(x)
        .zip(Decimal::from_f64(w))
        .and_then(|(a, b)| a.floor_div(b))
        .unwrap_or_else(|| (x / w).floor() as i64)
}

/// `k * w` in decimal arithmetic.
pub(crate) fn bin_edge(k: i64, w: f64) -> f64 {
    Decimal::from_f64(w).and_then(|d| d.mul_int(k)).map_or(k as f64 * w, Decimal::to_f64)
}

/// Exact decimal sum, falling back to floating point on overflow.
pub(crate) fn sum(values: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let exact = values
        .clone()
        .into_iter()
        .try_fold(Decimal { mantissa: 0, scale: 0 }, |acc, x| acc.add(Decimal::from_f64(x)?));
    exact.map_or_else(|| values.into_iter().sum(), Decimal::to_f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_binning() {
        assert_eq!(bin_index(0.3, 0.1), 3);
        assert_eq!(bin_index(-0.15, 0.1), -2);
        assert_eq!(bin_index(-0.1, 0.1), -1);
        assert_eq!(bin_index(0.0, 0.1), 0);
        assert_eq!(bin_index(-0.0, 0.25), 0);
        assert_eq!(bin_edge(3, 0.1), 0.3);
        assert_eq!(bin_edge(-2, 0.1), -0.2);
    }

    #[test]
    fn exact_sums() {
        assert_eq!(sum([-0.1, -0.2]), -0.3);
        assert_eq!(sum([0.1, 0.2, 0.3]), 0.6);
        assert_eq!(sum(Vec::<f64>::new()), 0.0);
        assert_eq!(sum([1e-7, 2.5]), 2.5000001);
    }

    #[test]
    fn round_trip() {
        for x in [0.0, 1.0, -0.012, 123.456, 0.000001, -5.0] {
            assert_eq!(Decimal::from_f64(x).unwrap().to_f64(), x);
        }
    }
}
