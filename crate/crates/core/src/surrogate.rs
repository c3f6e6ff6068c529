//! Surrogate derivatives for the spike gate.
//!
//! The hard gate's true derivative is a Dirac impulse at the threshold, so
//! the backward pass substitutes one of four unit-mass bumps centered on
//! `v_th`: a rectangle, a triangle, the logistic (sigmoid) density, or a
//! Gaussian. The width parameter `a` trades support against steepness; every
//! curve tends to the Dirac impulse as `a -> 0+`.
//!
//! Each curve also exposes its exact antiderivative ([`SurrogateSpec::smooth_gate`]),
//! a monotone 0-to-1 ramp used as a differentiable stand-in for the hard gate
//! when the gradient engine is checked against finite differences.

use crate::math::erf;

/// Which approximation curve to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurrogateKind {
    Rectangular,
    Triangular,
    SigmoidDerivative,
    Gaussian,
}

impl SurrogateKind {
    pub const ALL: [SurrogateKind; 4] = [
        SurrogateKind::Rectangular,
        SurrogateKind::Triangular,
        SurrogateKind::SigmoidDerivative,
        SurrogateKind::Gaussian,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SurrogateKind::Rectangular => "rectangular",
            SurrogateKind::Triangular => "triangular",
            SurrogateKind::SigmoidDerivative => "sigmoid",
            SurrogateKind::Gaussian => "gaussian",
        }
    }

    pub fn parse(s: &str) -> Option<SurrogateKind> {
        match s {
            "rectangular" | "rect" | "h1" => Some(SurrogateKind::Rectangular),
            "triangular" | "tri" | "h2" => Some(SurrogateKind::Triangular),
            "sigmoid" | "sigmoid-derivative" | "h3" => Some(SurrogateKind::SigmoidDerivative),
            "gaussian" | "gauss" | "h4" => Some(SurrogateKind::Gaussian),
            _ => None,
        }
    }
}

/// A surrogate curve: kind, width `a > 0`, centered on `v_th`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrogateSpec {
    pub kind: SurrogateKind,
    pub a: f64,
    pub v_th: f64,
}

impl SurrogateSpec {
    pub fn new(kind: SurrogateKind, a: f64, v_th: f64) -> Self {
        assert!(a > 0.0, "surrogate width must be positive");
        SurrogateSpec { kind, a, v_th }
    }

    /// The approximated gate derivative at potential `u`; nonnegative and
    /// symmetric about `v_th`, with unit integral over the real line.
    pub fn value(&self, u: f64) -> f64 {
        let d = u - self.v_th;
        let a = self.a;
        match self.kind {
            SurrogateKind::Rectangular => {
                if d.abs() < a / 2.0 {
                    1.0 / a
                } else {
                    0.0
                }
            }
            SurrogateKind::Triangular => {
                // peak sqrt(a)/2, zero at |d| = 2/sqrt(a); clamped outside
                (a.sqrt() / 2.0 - a / 4.0 * d.abs()).max(0.0)
            }
            SurrogateKind::SigmoidDerivative => {
                // (1/a) e^{-d/a} / (1 + e^{-d/a})^2 in overflow-safe form
                let w = (-d.abs() / (2.0 * a)).exp();
                let s = w / (1.0 + w * w);
                s * s / a
            }
            SurrogateKind::Gaussian => {
                (-d * d / (2.0 * a)).exp() / (2.0 * std::f64::consts::PI * a).sqrt()
            }
        }
    }

    /// Exact antiderivative of [`Self::value`]: monotone, 0 at -inf, 1 at +inf.
    pub fn smooth_gate(&self, u: f64) -> f64 {
        let d = u - self.v_th;
        let a = self.a;
        match self.kind {
            SurrogateKind::Rectangular => (d / a + 0.5).clamp(0.0, 1.0),
            SurrogateKind::Triangular => {
                let s = 2.0 / a.sqrt();
                if d <= -s {
                    0.0
                } else if d <= 0.0 {
                    (a.sqrt() / 2.0) * (d + s) + (a / 8.0) * (d * d - s * s)
                } else if d < s {
                    0.5 + (a.sqrt() / 2.0) * d - (a / 8.0) * d * d
                } else {
                    1.0
                }
            }
            SurrogateKind::SigmoidDerivative => {
                // logistic CDF with scale a
                if d >= 0.0 {
                    1.0 / (1.0 + (-d / a).exp())
                } else {
                    let e = (d / a).exp();
                    e / (1.0 + e)
                }
            }
            SurrogateKind::Gaussian => 0.5 * (1.0 + erf(d / (2.0 * a).sqrt())),
        }
    }

    /// Composite-midpoint quadrature of [`Self::value`] over `[lo, hi]`.
    ///
    /// Used by tests to confirm unit mass; the midpoint rule keeps the
    /// rectangle's discontinuities from biasing the sum.
    pub fn integral(&self, lo: f64, hi: f64, n: usize) -> f64 {
        assert!(lo < hi && n >= 1000, "integral needs lo < hi and n >= 1000");
        let h = (hi - lo) / n as f64;
        let mut sum = 0.0;
        for k in 0..n {
            sum += self.value(lo + (k as f64 + 0.5) * h);
        }
        sum * h
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const V_TH: f64 = 1.5;

    fn spec(kind: SurrogateKind, a: f64) -> SurrogateSpec {
        SurrogateSpec::new(kind, a, V_TH)
    }

    #[test]
    fn rectangular_support() {
        let s = spec(SurrogateKind::Rectangular, 1.0);
        assert_eq!(s.value(V_TH + 0.3), 1.0);
        assert_eq!(s.value(V_TH - 0.3), 1.0);
        assert_eq!(s.value(V_TH + 0.6), 0.0);
        // boundary is outside (strict inequality)
        assert_eq!(s.value(V_TH + 0.5), 0.0);
    }

    #[test]
    fn peak_values_at_center() {
        assert_eq!(spec(SurrogateKind::Triangular, 1.0).value(V_TH), 0.5);
        assert_eq!(spec(SurrogateKind::SigmoidDerivative, 1.0).value(V_TH), 0.25);
        let g = spec(SurrogateKind::Gaussian, 1.0).value(V_TH);
        assert!((g - 0.398942280401432678).abs() < 1e-15, "1/sqrt(2 pi), got {g}");
    }

    #[test]
    fn triangular_clamps_to_zero_outside_support() {
        let s = spec(SurrogateKind::Triangular, 1.0);
        assert_eq!(s.value(V_TH + 2.0), 0.0);
        assert_eq!(s.value(V_TH + 5.0), 0.0);
        assert!(s.value(V_TH + 1.99) > 0.0);
    }

    #[test]
    fn unit_mass_all_kinds_and_widths() {
        for kind in SurrogateKind::ALL {
            for a in [0.5, 1.0, 2.5, 5.0] {
                let s = spec(kind, a);
                let m = s.integral(V_TH - 60.0, V_TH + 60.0, 1_200_001);
                assert!(
                    (m - 1.0).abs() < 1e-3,
                    "{} a={a}: integral {m}",
                    kind.name()
                );
            }
        }
    }

    #[test]
    fn quadrature_matches_spec_windows() {
        let rect = spec(SurrogateKind::Rectangular, 1.0);
        assert!((rect.integral(V_TH - 5.0, V_TH + 5.0, 1000) - 1.0).abs() < 1e-6);
        let gauss = spec(SurrogateKind::Gaussian, 1.0);
        assert!((gauss.integral(V_TH - 8.0, V_TH + 8.0, 100_000) - 1.0).abs() < 1e-4);
        let sig = spec(SurrogateKind::SigmoidDerivative, 0.5);
        assert!((sig.integral(V_TH - 10.0, V_TH + 10.0, 100_000) - 1.0).abs() < 1e-4);
    }

    #[test]
    fn symmetric_about_threshold() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for kind in SurrogateKind::ALL {
            for a in [0.5, 1.0, 2.5] {
                let s = spec(kind, a);
                for _ in 0..200 {
                    let d: f64 = rng.gen_range(0.0..4.0);
                    let lhs = s.value(V_TH + d);
                    let rhs = s.value(V_TH - d);
                    assert!((lhs - rhs).abs() < 1e-14, "{} a={a} d={d}", kind.name());
                }
            }
        }
    }

    #[test]
    fn dirac_limit_vanishes_away_from_threshold() {
        for kind in SurrogateKind::ALL {
            let mut prev = f64::INFINITY;
            for a in [1.0, 0.1, 0.01, 0.001] {
                let v = spec(kind, a).value(V_TH + 0.7);
                assert!(v <= prev || v < 1e-12);
                prev = v;
            }
            assert!(prev < 1e-9, "{}: h(0.7) at a=1e-3 was {prev}", kind.name());
        }
    }

    #[test]
    fn smooth_gate_limits_and_center() {
        for kind in SurrogateKind::ALL {
            let s = spec(kind, 1.0);
            assert_eq!(s.smooth_gate(V_TH - 100.0), 0.0);
            assert_eq!(s.smooth_gate(V_TH + 100.0), 1.0);
            assert!((s.smooth_gate(V_TH) - 0.5).abs() < 1e-12, "{}", kind.name());
        }
        // past the rectangle's support the ramp saturates exactly
        assert_eq!(spec(SurrogateKind::Rectangular, 1.0).smooth_gate(V_TH + 1.0), 1.0);
    }

    #[test]
    fn smooth_gate_derivative_matches_value() {
        // central differences at 100 random points per kind/width, skipping
        // the piecewise curves' kink neighborhoods where the one-sided
        // derivatives differ
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let h = 1e-6;
        for kind in SurrogateKind::ALL {
            for a in [0.5, 1.0, 2.5] {
                let s = spec(kind, a);
                let kinks: Vec<f64> = match kind {
                    SurrogateKind::Rectangular => vec![V_TH - a / 2.0, V_TH + a / 2.0],
                    SurrogateKind::Triangular => {
                        let w = 2.0 / a.sqrt();
                        vec![V_TH - w, V_TH, V_TH + w]
                    }
                    _ => vec![],
                };
                let mut checked = 0;
                while checked < 100 {
                    let u: f64 = rng.gen_range(V_TH - 4.0..V_TH + 4.0);
                    if kinks.iter().any(|k| (u - k).abs() < 1e-3) {
                        continue;
                    }
                    let fd = (s.smooth_gate(u + h) - s.smooth_gate(u - h)) / (2.0 * h);
                    assert!(
                        (fd - s.value(u)).abs() <= 1e-6,
                        "{} a={a} u={u}: fd={fd} value={}",
                        kind.name(),
                        s.value(u)
                    );
                    checked += 1;
                }
            }
        }
    }

    #[test]
    fn smooth_gate_is_monotone() {
        for kind in SurrogateKind::ALL {
            let s = spec(kind, 0.7);
            let mut prev = -1.0;
            let mut u = V_TH - 6.0;
            while u <= V_TH + 6.0 {
                let v = s.smooth_gate(u);
                assert!(v >= prev && (0.0..=1.0).contains(&v));
                prev = v;
                u += 0.01;
            }
        }
    }

    #[test]
    fn kind_names_round_trip() {
        for kind in SurrogateKind::ALL {
            assert_eq!(SurrogateKind::parse(kind.name()), Some(kind));
        }
        assert_eq!(SurrogateKind::parse("h1"), Some(SurrogateKind::Rectangular));
        assert_eq!(SurrogateKind::parse("bogus"), None);
    }
}
