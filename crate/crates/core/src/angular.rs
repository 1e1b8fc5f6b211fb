//! Angular momentum algebra: half-integer quantum numbers and
//! Clebsch–Gordan coefficients in the Condon–Shortley phase convention.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A half-integer stored as twice its value, so `HalfInt(1)` is 1/2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct HalfInt(pub i32);

impl HalfInt {
    pub const ZERO: HalfInt = HalfInt(0);
    pub const HALF: HalfInt = HalfInt(1);
    pub const ONE: HalfInt = HalfInt(2);
    pub const THREE_HALVES: HalfInt = HalfInt(3);

    pub fn from_twice(twice: i32) -> Self {
        HalfInt(twice)
    }

    pub fn twice(self) -> i32 {
        self.0
    }

    pub fn value(self) -> f64 {
        f64::from(self.0) / 2.0
    }

    pub fn is_integer(self) -> bool {
        self.0 % 2 == 0
    }

    /// Magnetic sublevels `-j, -j+1, ..., j` in ascending order.
    pub fn projections(self) -> impl Iterator<Item = HalfInt> {
        let j = self.0;
        (-j..=j).step_by(2).map(HalfInt)
    }
}

impl std::ops::Add for HalfInt {
    type Output = HalfInt;
    fn add(self, rhs: Self) -> Self {
        HalfInt(self.0 + rhs.0)
    }
}

impl std::ops::Sub for HalfInt {
    type Output = HalfInt;
    fn sub(self, rhs: Self) -> Self {
        HalfInt(self.0 - rhs.0)
    }
}

impl std::ops::Neg for HalfInt {
    type Output = HalfInt;
    fn neg(self) -> Self {
        HalfInt(-self.0)
    }
}

impl fmt::Display for HalfInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_integer() {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}/2", self.0)
        }
    }
}

fn factorial(n: i32) -> f64 {
    debug_assert!(n >= 0);
    (1..=n).fold(1.0, |acc, k| acc * f64::from(k))
}

fn check_pair(j: HalfInt, m: HalfInt) -> Result<()> {
    if j.0 < 0 {
        return Err(Error::AngularMomentum(format!("negative j = {j}")));
    }
    if m.0.abs() > j.0 || (j.0 - m.0) % 2 != 0 {
        return Err(Error::AngularMomentum(format!("m = {m} is not a projection of j = {j}")));
    }
    Ok(())
}

/// `<j1 m1; j2 m2 | J M>`.
///
/// Returns zero when `M != m1 + m2`. Arguments that do not describe valid
/// angular momenta (|m| > j, mixed integer/half-integer parity, triangle
/// violation) are rejected.
pub fn clebsch_gordan(
    j1: HalfInt,
    m1: HalfInt,
    j2: HalfInt,
    m2: HalfInt,
    j: HalfInt,
    m: HalfInt,
) -> Result<f64> {
    check_pair(j1, m1)?;
    check_pair(j2, m2)?;
    check_pair(j, m)?;
    let (a, b, c) = (j1.0, j2.0, j.0);
    if c < (a - b).abs() || c > a + b || (a + b + c) % 2 != 0 {
        return Err(Error::AngularMomentum(format!(
            "triangle rule violated for ({j1}, {j2}, {j})"
        )));
    }
    if m1 + m2 != m {
        return Ok(0.0);
    }

    // All quantities below are integers once halved.
    let h = |twice: i32| twice / 2;
    let jsum = h(a + b - c);
    let prefactor = (f64::from(c + 1) * factorial(h(c + a - b)) * factorial(h(c - a + b))
        * factorial(jsum)
        / factorial(h(a + b + c) + 1))
    .sqrt();
    let norm = (factorial(h(c + m.0))
        * factorial(h(c - m.0))
        * factorial(h(a - m1.0))
        * factorial(h(a + m1.0))
        * factorial(h(b - m2.0))
        * factorial(h(b + m2.0)))
    .sqrt();

    let k_min = 0.max(h(b - c - m1.0)).max(h(a - c + m2.0));
    let k_max = jsum.min(h(a - m1.0)).min(h(b + m2.0));
    let mut sum = 0.0;
    for k in k_min..=k_max {
        let denom = factorial(k)
            * factorial(jsum - k)
            * factorial(h(a - m1.0) - k)
            * factorial(h(b + m2.0) - k)
            * factorial(h(c - b + m1.0) + k)
            * factorial(h(c - a - m2.0) + k);
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign / denom;
    }
    Ok(prefactor * norm * sum)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h(twice: i32) -> HalfInt {
        HalfInt(twice)
    }

    #[test]
    fn singlet_coefficient() {
        let c = clebsch_gordan(h(1), h(1), h(1), h(-1), h(0), h(0)).unwrap();
        assert!((c - 1.0 / 2f64.sqrt()).abs() < 1e-15);
        let c = clebsch_gordan(h(1), h(-1), h(1), h(1), h(0), h(0)).unwrap();
        assert!((c + 1.0 / 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn selection_rule_gives_zero() {
        let c = clebsch_gordan(h(1), h(1), h(2), h(2), h(3), h(1)).unwrap();
        assert_eq!(c, 0.0);
    }

    #[test]
    fn identity_coupling() {
        for j in 0..6 {
            let c = clebsch_gordan(h(j), h(j), h(0), h(0), h(j), h(j)).unwrap();
            assert!((c - 1.0).abs() < 1e-15, "j = {j}: {c}");
        }
    }

    #[test]
    fn invalid_arguments_rejected() {
        assert!(clebsch_gordan(h(1), h(3), h(1), h(-1), h(0), h(0)).is_err());
        assert!(clebsch_gordan(h(1), h(1), h(1), h(-1), h(4), h(0)).is_err());
        assert!(clebsch_gordan(h(1), h(0), h(1), h(0), h(0), h(0)).is_err());
    }

    #[test]
    fn projections_ascend() {
        let ms: Vec<_> = HalfInt::THREE_HALVES.projections().collect();
        assert_eq!(ms, vec![h(-3), h(-1), h(1), h(3)]);
    }
}
