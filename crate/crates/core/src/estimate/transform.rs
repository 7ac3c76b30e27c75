//! Maps between constrained model parameters and unconstrained coordinates.

use serde::{Deserialize, Serialize};

use crate::dynamics::{ModelKind, SIGMA2_FLOOR};
use crate::error::{Error, Result};

/// Lower bound on the log-variance intercept of the integer models.
pub const OMEGA_LOWER: f64 = -30.0;

/// Unconstrained coordinate used to place a parameter on its bound.
pub const SNAP_COORD: f64 = -30.0;

/// Parameter bounds imposed during estimation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRegime {
    pub name: String,
    /// Exclusive lower bound on the degrees of freedom; `None` means `nu > 0`.
    pub nu_lower: Option<f64>,
    pub alpha_nonneg: bool,
    pub garch_stationarity: bool,
}

impl BoundRegime {
    pub fn rugarch_like() -> Self {
        Self::preset("rugarch-like", Some(2.1))
    }

    pub fn fgarch_like() -> Self {
        Self::preset("fgarch-like", Some(2.0))
    }

    pub fn gas_like() -> Self {
        Self::preset("gas-like", Some(4.0))
    }

    pub fn unbounded() -> Self {
        Self::preset("unbounded", None)
    }

    fn preset(name: &str, nu_lower: Option<f64>) -> Self {
        BoundRegime { name: name.into(), nu_lower, alpha_nonneg: false, garch_stationarity: true }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "rugarch-like" | "rugarch" => Ok(Self::rugarch_like()),
            "fgarch-like" | "fgarch" => Ok(Self::fgarch_like()),
            "gas-like" | "gas" => Ok(Self::gas_like()),
            "unbounded" | "none" => Ok(Self::unbounded()),
            other => Err(Error::domain(format!(
                "unknown regime '{other}' (expected rugarch-like, fgarch-like, gas-like or unbounded)"
            ))),
        }
    }

    pub fn with_alpha_nonneg(mut self, on: bool) -> Self {
        self.alpha_nonneg = on;
        self
    }

    pub fn nu_floor(&self) -> f64 {
        self.nu_lower.unwrap_or(0.0)
    }
}

impl Default for BoundRegime {
    fn default() -> Self {
        Self::unbounded()
    }
}

/// How a single coordinate is mapped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Coord {
    Identity,
    /// `lower + exp(x)`
    Shifted(f64),
    /// `lower + ln(1 + exp(x))`
    Softplus(f64),
    /// `tanh(x / 2)`, the centered sigmoid onto `(-1, 1)`
    Centered,
    /// `1 / (1 + exp(-x))`
    Logistic,
    /// `max(exp(x), 2^-1074)`
    FlooredExp,
    /// GARCH `(alpha, phi)` on the open simplex; occupies two coordinates.
    Simplex,
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn softplus_inv(v: f64) -> f64 {
    if v > 30.0 {
        v + (-(-v).exp()).ln_1p()
    } else {
        v.exp_m1().ln()
    }
}

/// Transform for one model under one regime.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamMap {
    kind: ModelKind,
    coords: Vec<Coord>,
}

impl ParamMap {
    pub fn new(kind: ModelKind, regime: &BoundRegime) -> Self {
        let nu = Coord::Shifted(regime.nu_floor());
        let alpha = if regime.alpha_nonneg { Coord::Shifted(0.0) } else { Coord::Identity };
        use Coord::*;
        let coords = match kind {
            ModelKind::GarchT if regime.garch_stationarity => vec![Identity, Shifted(0.0), Simplex, Simplex, nu],
            ModelKind::GarchT => vec![Identity, Shifted(0.0), Shifted(0.0), Shifted(0.0), nu],
            ModelKind::GasT => vec![Identity, Identity, alpha, Centered, nu],
            ModelKind::StaticT => vec![FlooredExp, nu],
            ModelKind::IntervalNormal | ModelKind::Skellam => {
                vec![Centered, Softplus(OMEGA_LOWER), alpha, Centered]
            }
            ModelKind::IntervalT => vec![Centered, Softplus(OMEGA_LOWER), alpha, Centered, nu],
            ModelKind::ZiSkellam => vec![Centered, Softplus(OMEGA_LOWER), alpha, Centered, Logistic],
        };
        ParamMap { kind, coords }
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// Constrained values to unconstrained coordinates.
    pub fn transform(&self, p: &[f64]) -> Result<Vec<f64>> {
        if p.len() != self.dim() {
            return Err(Error::domain(format!("{} expects {} values, got {}", self.kind, self.dim(), p.len())));
        }
        let names = self.kind.param_names();
        let bad = |i: usize| Error::domain(format!("{} = {} is outside its admissible region", names[i], p[i]));
        let mut x = vec![0.0; p.len()];
        let mut i = 0;
        while i < p.len() {
            let v = p[i];
            if !v.is_finite() {
                return Err(bad(i));
            }
            if self.coords[i] == Coord::Simplex {
                let (a, b) = (v, p[i + 1]);
                let rest = 1.0 - a - b;
                if a <= 0.0 || b <= 0.0 || rest <= 0.0 || !b.is_finite() {
                    return Err(Error::domain(format!(
                        "GARCH alpha = {a}, phi = {b} must be positive with alpha + phi < 1"
                    )));
                }
                x[i] = (a / rest).ln();
                x[i + 1] = (b / rest).ln();
                i += 2;
                continue;
            }
            x[i] = match self.coords[i] {
                Coord::Identity => v,
                Coord::Shifted(lo) => {
                    if v <= lo {
                        return Err(bad(i));
                    }
                    (v - lo).ln()
                }
                Coord::Softplus(lo) => {
                    if v <= lo {
                        return Err(bad(i));
                    }
                    softplus_inv(v - lo)
                }
                Coord::Centered => {
                    if v.abs() >= 1.0 {
                        return Err(bad(i));
                    }
                    2.0 * v.atanh()
                }
                Coord::Logistic => {
                    if v <= 0.0 || v >= 1.0 {
                        return Err(bad(i));
                    }
                    (v / (1.0 - v)).ln()
                }
                Coord::FlooredExp => {
                    if v <= 0.0 {
                        return Err(bad(i));
                    }
                    v.max(SIGMA2_FLOOR).ln()
                }
                Coord::Simplex => unreachable!(),
            };
            i += 1;
        }
        Ok(x)
    }

    /// Unconstrained coordinates to constrained values.
    pub fn untransform(&self, x: &[f64]) -> Vec<f64> {
        let mut p = vec![0.0; x.len()];
        let mut i = 0;
        while i < x.len() {
            let u = x[i];
            if self.coords[i] == Coord::Simplex {
                // softmax with an implicit zero coordinate
                let m = u.max(x[i + 1]).max(0.0);
                let (ea, eb, e0) = ((u - m).exp(), (x[i + 1] - m).exp(), (-m).exp());
                let total = ea + eb + e0;
                p[i] = ea / total;
                p[i + 1] = eb / total;
                i += 2;
                continue;
            }
            p[i] = match self.coords[i] {
                Coord::Identity => u,
                Coord::Shifted(lo) => lo + u.exp(),
                Coord::Softplus(lo) => lo + softplus(u),
                Coord::Centered => (0.5 * u).tanh(),
                Coord::Logistic => 1.0 / (1.0 + (-u).exp()),
                Coord::FlooredExp => u.exp().max(SIGMA2_FLOOR),
                Coord::Simplex => unreachable!(),
            };
            i += 1;
        }
        p
    }

    /// Coordinates with a lower bound reachable by sending `x` to `-inf`.
    pub(crate) fn lower_bounded(&self) -> Vec<usize> {
        (0..self.dim())
            .filter(|&i| {
                matches!(
                    self.coords[i],
                    Coord::Shifted(_) | Coord::Softplus(_) | Coord::Logistic | Coord::FlooredExp | Coord::Simplex
                )
            })
            .collect()
    }

    /// Coordinate that puts parameter `i` on its lower bound.
    pub(crate) fn snap_coord(&self, i: usize) -> f64 {
        match self.coords[i] {
            Coord::FlooredExp => SIGMA2_FLOOR.ln() - 1.0,
            _ => SNAP_COORD,
        }
    }

    /// `x` with every one-sided coordinate that sits at its bound moved onto it exactly.
    pub(crate) fn pin_to_bounds(&self, x: &[f64]) -> Vec<f64> {
        let mut out = x.to_vec();
        for i in self.lower_bounded() {
            if self.at_bound(i, x) && x[i] < 0.0 {
                out[i] = f64::NEG_INFINITY;
            }
        }
        out
    }

    /// Whether coordinate `i` sits on a bound at `x`.
    pub(crate) fn at_bound(&self, i: usize, x: &[f64]) -> bool {
        match self.coords[i] {
            Coord::Identity => false,
            Coord::FlooredExp => x[i].exp() <= SIGMA2_FLOOR,
            Coord::Centered => x[i].abs() >= 20.0,
            Coord::Logistic => x[i].abs() >= 20.0,
            Coord::Shifted(_) | Coord::Softplus(_) => x[i] <= -20.0,
            Coord::Simplex => x[i] <= -20.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn random_admissible(kind: ModelKind, regime: &BoundRegime, rng: &mut ChaCha20Rng) -> Vec<f64> {
        let lo = regime.nu_floor();
        let nu = lo + rng.gen_range(0.01..30.0);
        let centered = |rng: &mut ChaCha20Rng| rng.gen_range(-0.999..0.999);
        match kind {
            ModelKind::GarchT => {
                let a: f64 = rng.gen_range(0.001..0.5);
                let b = rng.gen_range(0.001..(0.999 - a));
                vec![rng.gen_range(-2.0..2.0), rng.gen_range(0.01..10.0), a, b, nu]
            }
            ModelKind::GasT => {
                vec![rng.gen_range(-2.0..2.0), rng.gen_range(-3.0..3.0), rng.gen_range(-1.0..1.0), centered(rng), nu]
            }
            ModelKind::StaticT => vec![rng.gen_range(1e-3..100.0), nu],
            ModelKind::IntervalNormal | ModelKind::Skellam => {
                vec![centered(rng), rng.gen_range(-10.0..10.0), rng.gen_range(-1.0..1.0), centered(rng)]
            }
            ModelKind::IntervalT => {
                vec![centered(rng), rng.gen_range(-10.0..10.0), rng.gen_range(-1.0..1.0), centered(rng), nu]
            }
            ModelKind::ZiSkellam => vec![
                centered(rng),
                rng.gen_range(-10.0..10.0),
                rng.gen_range(-1.0..1.0),
                centered(rng),
                rng.gen_range(0.001..0.999),
            ],
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        for regime in [BoundRegime::unbounded(), BoundRegime::rugarch_like(), BoundRegime::gas_like()] {
            for kind in ModelKind::ALL {
                let map = ParamMap::new(kind, &regime);
                for _ in 0..1000 {
                    let p = random_admissible(kind, &regime, &mut rng);
                    let back = map.untransform(&map.transform(&p).unwrap());
                    for (a, b) in p.iter().zip(&back) {
                        assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{kind}: {p:?} -> {back:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn nu_on_bound_is_rejected() {
        let map = ParamMap::new(ModelKind::IntervalT, &BoundRegime::gas_like());
        assert!(map.transform(&[0.0, 1.0, 0.1, 0.5, 4.0]).is_err());
        assert!(map.untransform(&[0.0, 1.0, 0.1, 0.5, -800.0])[4] == 4.0);
    }

    #[test]
    fn zero_phi_maps_to_zero() {
        let map = ParamMap::new(ModelKind::Skellam, &BoundRegime::unbounded());
        assert_eq!(map.transform(&[0.0, 1.0, 0.1, 0.0]).unwrap()[3], 0.0);
    }

    #[test]
    fn garch_simplex_keeps_persistence_below_one() {
        let map = ParamMap::new(ModelKind::GarchT, &BoundRegime::rugarch_like());
        let p = map.untransform(&[0.0, 0.0, 40.0, 40.0, 1.0]);
        assert!(p[2] + p[3] < 1.0 || (p[2] + p[3] - 1.0).abs() < 1e-15);
        assert!(map.transform(&[0.0, 1.0, 0.5, 0.5, 5.0]).is_err());
    }

    #[test]
    fn regimes_by_name() {
        assert_eq!(BoundRegime::by_name("rugarch-like").unwrap().nu_lower, Some(2.1));
        assert_eq!(BoundRegime::by_name("fgarch_like").unwrap().nu_lower, Some(2.0));
        assert_eq!(BoundRegime::by_name("gas-like").unwrap().nu_lower, Some(4.0));
        assert_eq!(BoundRegime::by_name("unbounded").unwrap().nu_lower, None);
        assert!(BoundRegime::by_name("nope").is_err());
    }
}
