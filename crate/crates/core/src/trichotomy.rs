//! Solution structure of the algebraic system when `g11 g22 < g12 g21`.
//!
//! Folds of the solution family `phi -> (u, v)` sit where the derivative
//! denominator `g12 g21 - (d1/u + g11)(d2/v + g22)` vanishes. On that
//! singular curve `v` is an explicit function of `u`, and eliminating `phi`
//! leaves one scalar equation `sigma(u) = 0` on `u > u*`. The critical
//! points of `sigma` are roots of a cubic `p(u)`; its largest root `u1` is
//! the maximizer, so the sign of `sigma(u1)` decides between two folds
//! (three branches on an interval of potentials), no fold, or a degenerate
//! inflection.
//!
//! Branches themselves are traced by parametrizing the solution family by
//! `u`: with `phi` eliminated the remaining equation is strictly monotone in
//! `v`, so the family is a global graph over `u` and folds are harmless.

use crate::algebra::{fold_denominator, AlgebraicPoint, Branch, LOG_LIMIT};
use crate::error::{Error, Result};
use crate::output::{csv_table, KeyValueReport};
use crate::params::ModelParams;
use crate::roots::{expand_bracket, newton_bisect};

fn require_h2(params: &ModelParams) -> Result<()> {
    params.check_signs()?;
    if params.is_unique_branch() {
        return Err(Error::HypothesisViolation(
            "fold analysis requires g11 g22 < g12 g21",
        ));
    }
    Ok(())
}

/// Lower end `u* = d1 g22 / (g12 g21 - g11 g22)` of the singular curve.
pub fn u_star(params: &ModelParams) -> Result<f64> {
    require_h2(params)?;
    let p = params;
    Ok(p.d1 * p.g22 / (p.g12 * p.g21 - p.g11 * p.g22))
}

/// Coefficients of `p(u) = k3 u^3 + k2 u^2 + k1 u + k0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubicCoefficients {
    pub k3: f64,
    pub k2: f64,
    pub k1: f64,
    pub k0: f64,
}

impl CubicCoefficients {
    pub fn eval(&self, u: f64) -> f64 {
        ((self.k3 * u + self.k2) * u + self.k1) * u + self.k0
    }

    pub fn derivative(&self, u: f64) -> f64 {
        (3.0 * self.k3 * u + 2.0 * self.k2) * u + self.k1
    }

    fn max_abs(&self) -> f64 {
        [self.k3, self.k2, self.k1, self.k0]
            .iter()
            .fold(0.0f64, |m, k| m.max(k.abs()))
    }
}

/// Real-root structure read off the discriminant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RootStructure {
    /// One real root and a complex-conjugate pair.
    OneReal,
    /// Three real roots, at least one repeated.
    Repeated,
    ThreeDistinct,
}

/// Cubic coefficients with the auxiliary quantities `A`, `B`, `C` and the
/// discriminant `B^2 - 4AC`.
#[derive(Debug, Clone, PartialEq)]
pub struct CubicData {
    pub coeffs: CubicCoefficients,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub delta_dis: f64,
    /// Real roots sorted descending; filled by [`cubic_roots`].
    pub roots: Vec<f64>,
}

impl CubicData {
    pub fn structure(&self) -> RootStructure {
        if self.delta_dis > 0.0 {
            RootStructure::OneReal
        } else if self.delta_dis == 0.0 {
            RootStructure::Repeated
        } else {
            RootStructure::ThreeDistinct
        }
    }
}

/// Coefficients of the cubic whose roots are the critical points of `sigma`.
pub fn cubic_coeffs(params: &ModelParams) -> Result<CubicCoefficients> {
    require_h2(params)?;
    let ModelParams {
        d1,
        d2,
        g11,
        g12,
        g21,
        g22,
        ..
    } = *params;
    let det = g11 * g22 - g12 * g21;
    Ok(CubicCoefficients {
        k3: g11 * det * det,
        k2: d1 * (g12 * g21 - 3.0 * g11 * g22) * (g12 * g21 - g11 * g22),
        k1: -d1 * (d2 * g21 * g12 * g12 + 2.0 * d1 * g21 * g22 * g12 - 3.0 * d1 * g11 * g22 * g22),
        k0: d1 * d1 * d1 * g22 * g22,
    })
}

/// Fills the auxiliary quantities and the discriminant.
pub fn shengjin(coeffs: &CubicCoefficients) -> Result<CubicData> {
    let CubicCoefficients { k3, k2, k1, k0 } = *coeffs;
    if k3 == 0.0 {
        return Err(Error::DegenerateCubic);
    }
    let a = k2 * k2 - 3.0 * k1 * k3;
    let b = k1 * k2 - 9.0 * k0 * k3;
    let c = k1 * k1 - 3.0 * k0 * k2;
    Ok(CubicData {
        coeffs: *coeffs,
        a,
        b,
        c,
        delta_dis: b * b - 4.0 * a * c,
        roots: Vec::new(),
    })
}

/// Three distinct real roots, sorted descending, by the trigonometric form
/// followed by Newton polishing.
pub fn cubic_roots(cubic: &CubicData) -> Result<Vec<f64>> {
    if !(cubic.delta_dis < 0.0) {
        return Err(Error::WrongRegime(
            "closed-form roots need a negative discriminant",
        ));
    }
    let CubicCoefficients { k3, k2, .. } = cubic.coeffs;
    // A > 0 whenever the discriminant is negative
    let sqrt_a = cubic.a.sqrt();
    let t = ((2.0 * cubic.a * k2 - 3.0 * k3 * cubic.b) / (2.0 * cubic.a * sqrt_a)).clamp(-1.0, 1.0);
    let third = t.acos() / 3.0;
    let (cos, sin) = (third.cos(), third.sin());
    let s3 = 3f64.sqrt();
    let mut roots = vec![
        (-k2 - 2.0 * sqrt_a * cos) / (3.0 * k3),
        (-k2 + sqrt_a * (cos + s3 * sin)) / (3.0 * k3),
        (-k2 + sqrt_a * (cos - s3 * sin)) / (3.0 * k3),
    ];
    let p = cubic.coeffs;
    for r in &mut roots {
        for _ in 0..4 {
            let d = p.derivative(*r);
            if d == 0.0 {
                break;
            }
            let next = *r - p.eval(*r) / d;
            if (p.eval(next)).abs() >= p.eval(*r).abs() {
                break;
            }
            *r = next;
        }
    }
    roots.sort_by(|a, b| b.total_cmp(a));
    let scale = p.max_abs().max(1.0);
    for &r in &roots {
        if p.eval(r).abs() > 1e-10 * scale * (1.0 + r.abs()).powi(3) {
            return Err(Error::NonConvergence {
                iterations: 4,
                residual: p.eval(r).abs(),
            });
        }
    }
    Ok(roots)
}

/// `v` on the singular curve where the derivative denominator vanishes.
pub fn v_on_singular_curve(u: f64, params: &ModelParams) -> Result<f64> {
    let us = u_star(params)?;
    if !(u > us) {
        return Err(Error::DomainViolation { u, u_star: us });
    }
    let p = params;
    Ok(p.d2 * (p.d1 + p.g11 * u) / (u * (p.g12 * p.g21 - p.g11 * p.g22) - p.d1 * p.g22))
}

/// Difference of the potentials implied by the two algebraic equations
/// along the singular curve; its roots are the fold points.
pub fn sigma(u: f64, params: &ModelParams) -> Result<f64> {
    let v = v_on_singular_curve(u, params)?;
    let p = params;
    let from_first = (p.c1 - p.d1 * u.ln() - p.g11 * u - p.g12 * v) / p.theta1;
    let from_second = (p.c2 - p.d2 * v.ln() - p.g21 * u - p.g22 * v) / p.theta2;
    Ok(from_first - from_second)
}

/// Closed-form derivative of [`sigma`].
pub fn sigma_prime(u: f64, params: &ModelParams) -> Result<f64> {
    let us = u_star(params)?;
    if !(u > us) {
        return Err(Error::DomainViolation { u, u_star: us });
    }
    let p = params;
    let cubic = cubic_coeffs(params)?;
    let lin = u * (p.g21 * p.theta1 - p.g11 * p.theta2) - p.d1 * p.theta2;
    let q = u * (p.g12 * p.g21 - p.g11 * p.g22) - p.d1 * p.g22;
    Ok(cubic.eval(u) * lin / (p.theta1 * p.theta2 * u * (p.d1 + p.g11 * u) * q * q))
}

/// Regime of the solution family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Two folds; three solutions on an open interval of potentials.
    Triple,
    /// No fold; the family is a strictly monotone graph over `phi`.
    UniqueMonotone,
    /// Single degenerate fold with infinite slope at one potential.
    Inflection,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::Triple => "Triple",
            Regime::UniqueMonotone => "UniqueMonotone",
            Regime::Inflection => "Inflection",
        }
    }
}

/// Everything the classification computes.
#[derive(Debug, Clone, PartialEq)]
pub struct TrichotomyReport {
    pub u_star: f64,
    pub cubic: CubicData,
    pub sigma_at_u1: f64,
    pub regime: Regime,
    /// Fold locations in `u` (ascending), triple regime only.
    pub fold_u: Option<(f64, f64)>,
    /// `(phi_under, phi_bar)`, the potentials at the folds, ascending.
    pub fold_phi: Option<(f64, f64)>,
    /// Potential of the inflection point, inflection regime only.
    pub phi_check: Option<f64>,
}

impl TrichotomyReport {
    pub fn u1(&self) -> f64 {
        self.cubic.roots[0]
    }

    pub fn to_report(&self) -> KeyValueReport {
        let mut r = KeyValueReport::new();
        let k = &self.cubic.coeffs;
        r.text("regime", self.regime.name())
            .number("u_star", self.u_star)
            .number("k3", k.k3)
            .number("k2", k.k2)
            .number("k1", k.k1)
            .number("k0", k.k0)
            .number("A", self.cubic.a)
            .number("B", self.cubic.b)
            .number("C", self.cubic.c)
            .number("delta_dis", self.cubic.delta_dis);
        for (i, root) in self.cubic.roots.iter().enumerate() {
            r.number(&format!("u{}", i + 1), *root);
        }
        r.number("sigma_u1", self.sigma_at_u1);
        if let (Some((ua, ub)), Some((pa, pb))) = (self.fold_u, self.fold_phi) {
            r.number("fold_u_low", ua)
                .number("fold_u_high", ub)
                .number("phi_under", pa)
                .number("phi_bar", pb);
        }
        if let Some(pc) = self.phi_check {
            r.number("phi_check", pc);
        }
        r
    }
}

/// Root of `sigma` between `a` and `b`, where `sigma` changes sign.
fn sigma_root(params: &ModelParams, a: f64, b: f64) -> Result<f64> {
    let (sa, sb) = (sigma(a, params)?, sigma(b, params)?);
    let (lo, hi, slo, shi) = if a < b {
        (a, b, sa, sb)
    } else {
        (b, a, sb, sa)
    };
    newton_bisect(
        |u| Ok((sigma(u, params)?, sigma_prime(u, params)?)),
        lo,
        hi,
        slo,
        shi,
        0.0,
        1e-15,
    )
}

/// Classifies the solution structure from the sign of `sigma(u1)`.
pub fn classify(params: &ModelParams, tol_sigma: f64) -> Result<TrichotomyReport> {
    if params.check_signs().is_ok() && params.is_unique_branch() {
        return Err(Error::WrongRegime(
            "classification applies only when g11 g22 < g12 g21",
        ));
    }
    let us = u_star(params)?;
    let coeffs = cubic_coeffs(params)?;
    let mut cubic = shengjin(&coeffs)?;
    cubic.roots = cubic_roots(&cubic)?;
    let u1 = cubic.roots[0];
    if !(u1 > us) {
        return Err(Error::DomainViolation { u: u1, u_star: us });
    }
    let s1 = sigma(u1, params)?;
    let regime = if s1 > tol_sigma {
        Regime::Triple
    } else if s1 < -tol_sigma {
        Regime::UniqueMonotone
    } else {
        Regime::Inflection
    };
    let mut report = TrichotomyReport {
        u_star: us,
        cubic,
        sigma_at_u1: s1,
        regime,
        fold_u: None,
        fold_phi: None,
        phi_check: None,
    };
    match regime {
        Regime::Triple => {
            let mut lo = u1;
            let mut gap = u1 - us;
            while sigma(lo, params)? >= 0.0 {
                gap *= 0.5;
                lo = us + gap;
                if gap <= f64::EPSILON * us {
                    return Err(Error::BracketFailure { what: "lower fold" });
                }
            }
            let mut hi = 2.0 * u1;
            while sigma(hi, params)? >= 0.0 {
                hi *= 2.0;
                if !hi.is_finite() || hi > LOG_LIMIT.exp() {
                    return Err(Error::BracketFailure { what: "upper fold" });
                }
            }
            let ua = sigma_root(params, lo, u1)?;
            let ub = sigma_root(params, u1, hi)?;
            let pa = curve_point(ua, params)?.phi;
            let pb = curve_point(ub, params)?.phi;
            report.fold_u = Some((ua, ub));
            report.fold_phi = Some((pa.min(pb), pa.max(pb)));
        }
        Regime::Inflection => report.phi_check = Some(curve_point(u1, params)?.phi),
        Regime::UniqueMonotone => {}
    }
    Ok(report)
}

/// Point of the solution family at a given `u`, with `v` from the
/// potential-free equation and `phi` from the first equation.
///
/// Valid under either hypothesis. The branch tag is `Unique`; callers that
/// know the regime retag it.
pub fn curve_point(u: f64, params: &ModelParams) -> Result<AlgebraicPoint> {
    params.check_signs()?;
    if !(u > 0.0) {
        return Err(Error::NonpositiveDensity { u, v: f64::NAN });
    }
    let p = *params;
    let base1 = p.d1 * u.ln() + p.g11 * u - p.c1;
    let base2 = p.g21 * u - p.c2;
    // strictly decreasing in t = log v
    let f = |t: f64| -> Result<(f64, f64)> {
        let v = t.exp();
        let val = p.theta2 * (base1 + p.g12 * v) - p.theta1 * (p.d2 * t + base2 + p.g22 * v);
        let der = p.theta2 * p.g12 * v - p.theta1 * (p.d2 + p.g22 * v);
        Ok((val, der))
    };
    let (lo, hi, flo, fhi) = expand_bracket(
        |t| Ok(f(t)?.0),
        -1.0,
        1.0,
        -LOG_LIMIT,
        LOG_LIMIT,
        "v on branch curve",
    )?;
    let ftol = 1e-15 * p.theta1 * (1.0 + p.c1.abs() + p.c2.abs() + base1.abs());
    let t = newton_bisect(f, lo, hi, flo, fhi, ftol, 1e-16)?;
    let v = t.exp();
    let phi = (p.c1 - p.d1 * u.ln() - p.g11 * u - p.g12 * v) / p.theta1;
    Ok(AlgebraicPoint {
        u,
        v,
        phi,
        branch: Branch::Unique,
    })
}

/// `dphi/du` along the solution family. Its sign is the sign of the fold
/// denominator, so it vanishes exactly at folds.
pub fn curve_slope(point: &AlgebraicPoint, params: &ModelParams) -> f64 {
    let p = params;
    let b = p.d2 / point.v + p.g22;
    fold_denominator(point.u, point.v, params) / (p.theta1 * b - p.g12 * p.theta2)
}

/// Sampled solution family parametrized by `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchCurve {
    pub u_samples: Vec<f64>,
    pub v_samples: Vec<f64>,
    pub phi_samples: Vec<f64>,
}

impl BranchCurve {
    pub fn len(&self) -> usize {
        self.u_samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u_samples.is_empty()
    }

    /// Number of solutions `u` of `phi(u) = phi` seen on the samples.
    ///
    /// Samples within `tol` of the slice are treated as touching it; a run
    /// of touching samples counts once, whether the curve crosses there or
    /// only grazes the slice (a fold).
    pub fn slice_count(&self, phi: f64, tol: f64) -> usize {
        let mut count = 0;
        let mut last: Option<bool> = None;
        let mut in_touch = false;
        for &y in &self.phi_samples {
            let d = y - phi;
            if d.abs() <= tol {
                if !in_touch {
                    count += 1;
                    in_touch = true;
                }
                continue;
            }
            let above = d > 0.0;
            if !in_touch {
                if let Some(prev) = last {
                    if prev != above {
                        count += 1;
                    }
                }
            }
            in_touch = false;
            last = Some(above);
        }
        count
    }

    /// True when `phi(u)` is strictly monotone over the samples.
    pub fn is_monotone(&self) -> bool {
        let inc = self.phi_samples.windows(2).all(|w| w[1] > w[0]);
        let dec = self.phi_samples.windows(2).all(|w| w[1] < w[0]);
        inc || dec
    }

    /// CSV export with header `u,v,phi`.
    pub fn to_csv(&self) -> String {
        let rows: Vec<[f64; 3]> = (0..self.len())
            .map(|i| [self.u_samples[i], self.v_samples[i], self.phi_samples[i]])
            .collect();
        csv_table("u,v,phi", rows.iter().map(|r| r.as_slice()))
    }
}

/// Samples the solution family at `n` geometrically spaced `u` in
/// `[u_lo, u_hi]`.
pub fn branch_sweep(params: &ModelParams, u_lo: f64, u_hi: f64, n: usize) -> Result<BranchCurve> {
    branch_sweep_including(params, u_lo, u_hi, n, &[])
}

/// Like [`branch_sweep`], with extra `u` values (typically the folds)
/// merged into the sample set.
pub fn branch_sweep_including(
    params: &ModelParams,
    u_lo: f64,
    u_hi: f64,
    n: usize,
    extra: &[f64],
) -> Result<BranchCurve> {
    if !(u_lo > 0.0 && u_lo < u_hi) || n < 2 {
        return Err(Error::InvalidArgument(
            "branch_sweep needs 0 < u_lo < u_hi and n >= 2".into(),
        ));
    }
    let ratio = (u_hi / u_lo).ln() / (n - 1) as f64;
    let mut us: Vec<f64> = (0..n).map(|i| u_lo * (ratio * i as f64).exp()).collect();
    us[n - 1] = u_hi;
    us.extend(extra.iter().copied().filter(|&u| u > u_lo && u < u_hi));
    us.sort_by(f64::total_cmp);
    us.dedup();
    let mut curve = BranchCurve {
        u_samples: Vec::with_capacity(us.len()),
        v_samples: Vec::with_capacity(us.len()),
        phi_samples: Vec::with_capacity(us.len()),
    };
    for u in us {
        let pt = curve_point(u, params)?;
        curve.u_samples.push(pt.u);
        curve.v_samples.push(pt.v);
        curve.phi_samples.push(pt.phi);
    }
    Ok(curve)
}

/// Evaluates every solution branch at a prescribed potential.
#[derive(Debug, Clone)]
pub struct BranchSet {
    params: ModelParams,
    report: TrichotomyReport,
}

impl BranchSet {
    pub fn new(params: &ModelParams) -> Result<Self> {
        let report = classify(params, params.sigma_tolerance())?;
        Ok(Self {
            params: *params,
            report,
        })
    }

    pub fn report(&self) -> &TrichotomyReport {
        &self.report
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// Branches that exist at `phi`.
    pub fn branches_at(&self, phi: f64) -> Vec<Branch> {
        match self.report.fold_phi {
            None => vec![Branch::Unique],
            Some((lo, hi)) => {
                let mut out = Vec::new();
                if phi >= lo {
                    out.push(Branch::Lower);
                }
                if phi >= lo && phi <= hi {
                    out.push(Branch::Middle);
                }
                if phi <= hi {
                    out.push(Branch::Upper);
                }
                out
            }
        }
    }

    /// All solutions at `phi`, ordered by increasing `u`.
    pub fn all_points(&self, phi: f64) -> Result<Vec<AlgebraicPoint>> {
        self.branches_at(phi)
            .into_iter()
            .map(|b| self.point(phi, b))
            .collect()
    }

    /// The solution on `branch` at `phi`.
    ///
    /// In the triple regime `Unique` resolves to whichever branch is alone
    /// at `phi`; outside the triple regime every request resolves to the
    /// single branch.
    pub fn point(&self, phi: f64, branch: Branch) -> Result<AlgebraicPoint> {
        let unavailable = || Error::BranchUnavailable {
            node: 0,
            phi,
            branch: branch.name(),
        };
        if !phi.is_finite() {
            return Err(unavailable());
        }
        let (s_min, s_max, tag) = match (self.report.fold_u, self.report.fold_phi) {
            (Some((ua, ub)), Some((lo, hi))) => {
                let resolved = match branch {
                    Branch::Unique if phi < lo => Branch::Upper,
                    Branch::Unique if phi > hi => Branch::Lower,
                    Branch::Unique => return Err(unavailable()),
                    b => b,
                };
                match resolved {
                    Branch::Lower if phi >= lo => (-LOG_LIMIT, ua.ln(), Branch::Lower),
                    Branch::Middle if phi >= lo && phi <= hi => (ua.ln(), ub.ln(), Branch::Middle),
                    Branch::Upper if phi <= hi => (ub.ln(), LOG_LIMIT, Branch::Upper),
                    _ => return Err(unavailable()),
                }
            }
            _ => (-LOG_LIMIT, LOG_LIMIT, Branch::Unique),
        };
        let p = self.params;
        let f = |s: f64| -> Result<(f64, f64)> {
            let pt = curve_point(s.exp(), &p)?;
            Ok((pt.phi - phi, pt.u * curve_slope(&pt, &p)))
        };
        let (start_lo, start_hi) = match tag {
            Branch::Lower => (s_max - 1.0, s_max),
            Branch::Upper => (s_min, s_min + 1.0),
            Branch::Middle => (s_min, s_max),
            Branch::Unique => (-1.0, 1.0),
        };
        let (lo, hi, flo, fhi) = expand_bracket(
            |s| Ok(f(s)?.0),
            start_lo,
            start_hi,
            s_min,
            s_max,
            "branch inversion",
        )
        .map_err(|e| match e {
            Error::BracketFailure { .. } => unavailable(),
            other => other,
        })?;
        let s = newton_bisect(f, lo, hi, flo, fhi, 1e-14 * (1.0 + phi.abs()), 1e-16)?;
        let pt = curve_point(s.exp(), &p)?;
        Ok(AlgebraicPoint {
            u: pt.u,
            v: pt.v,
            phi,
            branch: tag,
        })
    }

    /// `(point, G, G')` on a branch.
    pub fn charge(&self, phi: f64, branch: Branch) -> Result<(AlgebraicPoint, f64, f64)> {
        let pt = self.point(phi, branch)?;
        let p = &self.params;
        let g = p.gamma1 * pt.u + p.gamma2 * pt.v;
        let dg = match crate::algebra::duv_dphi(&pt, p) {
            Ok((du, dv)) => p.gamma1 * du + p.gamma2 * dv,
            Err(Error::SingularDenominator { .. }) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        Ok((pt, g, dg))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::residual;

    fn worked(c: f64) -> ModelParams {
        ModelParams {
            d1: 1.0,
            d2: 1.0,
            theta1: 1.0,
            theta2: -1.0,
            g11: 1.0,
            g12: 2.0,
            g21: 2.0,
            g22: 1.0,
            gamma1: 1.0,
            gamma2: -1.0,
            c1: c,
            c2: c,
        }
    }

    #[test]
    fn u_star_values() {
        assert!((u_star(&worked(4.0)).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        // g12 g21 - g11 g22 = 4 with d1 = 2, g22 = 1
        let p = ModelParams {
            d1: 2.0,
            g11: 1.0,
            g22: 1.0,
            g12: 5.0,
            g21: 1.0,
            ..worked(4.0)
        };
        assert!((u_star(&p).unwrap() - 0.5).abs() < 1e-15);
        let eq = ModelParams {
            g12: 1.0,
            g21: 1.0,
            ..worked(4.0)
        };
        assert!(matches!(u_star(&eq), Err(Error::HypothesisViolation(_))));
    }

    #[test]
    fn worked_cubic() {
        let k = cubic_coeffs(&worked(4.0)).unwrap();
        assert_eq!((k.k3, k.k2, k.k1, k.k0), (9.0, 3.0, -13.0, 1.0));
        let doubled = cubic_coeffs(&ModelParams {
            d1: 2.0,
            ..worked(4.0)
        })
        .unwrap();
        assert_eq!(doubled.k0, 8.0);
        let data = shengjin(&k).unwrap();
        assert_eq!((data.a, data.b, data.c), (360.0, -120.0, 160.0));
        assert_eq!(data.delta_dis, -216000.0);
        assert_eq!(data.structure(), RootStructure::ThreeDistinct);
    }

    #[test]
    fn discriminant_cases() {
        let triple = shengjin(&CubicCoefficients {
            k3: 1.0,
            k2: -3.0,
            k1: 3.0,
            k0: -1.0,
        })
        .unwrap();
        assert_eq!(
            (triple.a, triple.b, triple.c, triple.delta_dis),
            (0.0, 0.0, 0.0, 0.0)
        );
        assert_eq!(triple.structure(), RootStructure::Repeated);
        let one = shengjin(&CubicCoefficients {
            k3: 1.0,
            k2: 0.0,
            k1: 1.0,
            k0: 0.0,
        })
        .unwrap();
        assert_eq!((one.a, one.b, one.c, one.delta_dis), (-3.0, 0.0, 1.0, 12.0));
        assert_eq!(one.structure(), RootStructure::OneReal);
        assert!(matches!(cubic_roots(&one), Err(Error::WrongRegime(_))));
        assert_eq!(
            shengjin(&CubicCoefficients {
                k3: 0.0,
                k2: 1.0,
                k1: 1.0,
                k0: 1.0
            }),
            Err(Error::DegenerateCubic)
        );
    }

    #[test]
    fn worked_roots_match_factorization() {
        // p(u) = (u - 1)(9u^2 + 12u - 1)
        let q = |sign: f64| (-12.0 + sign * (144.0f64 + 36.0).sqrt()) / 18.0;
        let expected = [1.0, q(1.0), q(-1.0)];
        let data = shengjin(&cubic_coeffs(&worked(4.0)).unwrap()).unwrap();
        let roots = cubic_roots(&data).unwrap();
        for (r, e) in roots.iter().zip(expected) {
            assert!((r - e).abs() < 1e-13, "{r} vs {e}");
            assert!(data.coeffs.eval(*r).abs() < 1e-10);
        }
        assert!((roots[1] - 0.078689).abs() < 1e-6);
        assert!((roots[2] + 1.412022).abs() < 1e-6);
        assert!(roots[1] <= 1.0 / 3.0);
    }

    #[test]
    fn singular_curve() {
        let p = worked(4.0);
        assert!((v_on_singular_curve(1.0, &p).unwrap() - 1.0).abs() < 1e-15);
        assert!(v_on_singular_curve(1.0 / 3.0 + 1e-12, &p).unwrap() > 1e10);
        assert!((v_on_singular_curve(1e12, &p).unwrap() - 1.0 / 3.0).abs() < 1e-9);
        assert!(matches!(
            v_on_singular_curve(0.2, &p),
            Err(Error::DomainViolation { .. })
        ));
        // at a fold the denominator vanishes
        assert!(fold_denominator(1.0, 1.0, &p).abs() < 1e-15);
    }

    #[test]
    fn sigma_values_and_limits() {
        for c in [2.0, 3.0, 4.0, 0.0] {
            let p = worked(c);
            assert!((sigma(1.0, &p).unwrap() - (2.0 * c - 6.0)).abs() < 1e-12);
        }
        let p = worked(4.0);
        assert!(sigma(1.0 / 3.0 + 1e-9, &p).unwrap() < -1e6);
        assert!(sigma(1e9, &p).unwrap() < -1e6);
        assert!(sigma(0.3, &p).is_err());
    }

    #[test]
    fn sigma_prime_matches_differences() {
        let p = worked(4.0);
        for u in [0.4, 0.7, 1.0, 1.6, 3.0, 10.0] {
            let h = 1e-6 * u;
            let fd = (sigma(u + h, &p).unwrap() - sigma(u - h, &p).unwrap()) / (2.0 * h);
            let exact = sigma_prime(u, &p).unwrap();
            assert!(
                (fd - exact).abs() < 1e-6 * (1.0 + exact.abs()),
                "{u}: {fd} vs {exact}"
            );
        }
        assert!(sigma_prime(1.0, &p).unwrap().abs() < 1e-14);
    }

    #[test]
    fn regimes_on_worked_set() {
        let tri = classify(&worked(4.0), worked(4.0).sigma_tolerance()).unwrap();
        assert_eq!(tri.regime, Regime::Triple);
        assert!((tri.sigma_at_u1 - 2.0).abs() < 1e-12);
        let (ua, ub) = tri.fold_u.unwrap();
        assert!(ua > tri.u_star && ua < 1.0 && ub > 1.0);
        let (pa, pb) = tri.fold_phi.unwrap();
        assert!(pa < pb);
        // symmetric parameters put the folds at opposite potentials
        assert!((pa + pb).abs() < 1e-10);
        for u in [ua, ub] {
            let pt = curve_point(u, &worked(4.0)).unwrap();
            assert!(fold_denominator(pt.u, pt.v, &worked(4.0)).abs() < 1e-6);
            let vs = v_on_singular_curve(u, &worked(4.0)).unwrap();
            assert!((pt.v - vs).abs() < 1e-9 * vs);
        }

        let mono = classify(&worked(2.0), 1e-9).unwrap();
        assert_eq!(mono.regime, Regime::UniqueMonotone);
        assert!((mono.sigma_at_u1 + 2.0).abs() < 1e-12);

        let infl = classify(&worked(3.0), worked(3.0).sigma_tolerance()).unwrap();
        assert_eq!(infl.regime, Regime::Inflection);
        assert!(infl.phi_check.is_some());

        let h1 = ModelParams {
            g11: 2.0,
            g22: 2.0,
            g12: 1.0,
            g21: 1.0,
            ..worked(4.0)
        };
        assert!(matches!(classify(&h1, 1e-9), Err(Error::WrongRegime(_))));
    }

    #[test]
    fn report_contains_regime() {
        let tri = classify(&worked(4.0), 1e-8).unwrap();
        let text = tri.to_report().render();
        assert!(text.contains("regime=Triple\n"));
        assert!(text.contains("phi_bar="));
    }

    #[test]
    fn curve_points_solve_the_system() {
        let p = worked(4.0);
        for u in [1e-3, 0.1, 0.5, 1.0, 2.0, 30.0] {
            let pt = curve_point(u, &p).unwrap();
            let (r1, r2) = residual(pt.u, pt.v, pt.phi, &p).unwrap();
            assert!(r1.abs() < 1e-12 && r2.abs() < 1e-12);
        }
    }

    #[test]
    fn slicing_the_triple_curve() {
        let p = worked(4.0);
        let rep = classify(&p, p.sigma_tolerance()).unwrap();
        let (ua, ub) = rep.fold_u.unwrap();
        let (lo, hi) = rep.fold_phi.unwrap();
        let curve = branch_sweep_including(&p, 1e-3, 1e2, 4000, &[ua, ub]).unwrap();
        assert!(curve.v_samples.windows(2).all(|w| w[1] < w[0]));
        let tol = 1e-10;
        assert_eq!(curve.slice_count(0.5 * (lo + hi), tol), 3);
        assert_eq!(curve.slice_count(hi + 1.0, tol), 1);
        assert_eq!(curve.slice_count(lo - 1.0, tol), 1);
        assert_eq!(curve.slice_count(hi, tol), 2);
        assert_eq!(curve.slice_count(lo, tol), 2);
        assert!(!curve.is_monotone());
    }

    #[test]
    fn unique_monotone_curve_has_single_crossings() {
        let p = worked(2.0);
        let curve = branch_sweep(&p, 1e-3, 1e2, 2000).unwrap();
        assert!(curve.is_monotone());
        for phi in [-5.0, -1.0, 0.0, 0.3, 2.0] {
            assert_eq!(curve.slice_count(phi, 1e-12), 1);
        }
    }

    #[test]
    fn branch_set_enumerates_triples() {
        let p = worked(4.0);
        let set = BranchSet::new(&p).unwrap();
        let pts = set.all_points(0.0).unwrap();
        assert_eq!(pts.len(), 3);
        assert!(pts[0].u < pts[1].u && pts[1].u < pts[2].u);
        // middle point is the symmetric one
        assert!((pts[1].u - pts[1].v).abs() < 1e-10);
        for pt in &pts {
            let (r1, r2) = residual(pt.u, pt.v, 0.0, &p).unwrap();
            assert!(r1.abs() < 1e-11 && r2.abs() < 1e-11);
        }
        let (_, hi) = set.report().fold_phi.unwrap();
        assert_eq!(set.all_points(hi + 0.5).unwrap().len(), 1);
        assert!(matches!(
            set.point(hi + 0.5, Branch::Upper),
            Err(Error::BranchUnavailable { .. })
        ));
        let (pt, g, dg) = set.charge(0.05, Branch::Lower).unwrap();
        assert_eq!(pt.branch, Branch::Lower);
        assert!(g < 0.0 && dg < 0.0);
        let (_, _, dg_mid) = set.charge(0.0, Branch::Middle).unwrap();
        assert!(dg_mid > 0.0);
    }

    #[test]
    fn random_draws_keep_the_root_ordering() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut triples = 0;
        for _ in 0..400 {
            let g11 = rng.gen_range(0.1..2.0);
            let g22 = rng.gen_range(0.1..2.0);
            let g12 = rng.gen_range(0.1..3.0);
            let g21 = g11 * g22 / g12 * rng.gen_range(1.05..4.0);
            let p = ModelParams {
                d1: rng.gen_range(0.2..3.0),
                d2: rng.gen_range(0.2..3.0),
                theta1: rng.gen_range(0.2..2.0),
                theta2: -rng.gen_range(0.2..2.0),
                g11,
                g12,
                g21,
                g22,
                gamma1: 1.0,
                gamma2: -1.0,
                c1: rng.gen_range(-3.0..8.0),
                c2: rng.gen_range(-3.0..8.0),
            };
            let rep = classify(&p, p.sigma_tolerance()).unwrap();
            assert!(rep.cubic.delta_dis < 0.0);
            let r = &rep.cubic.roots;
            assert!(r[2] < 0.0 && 0.0 < r[1] && r[1] <= rep.u_star && rep.u_star < r[0]);
            let u1 = r[0];
            let s1 = rep.sigma_at_u1;
            for f in [0.9, 0.99] {
                let below = rep.u_star + f * (u1 - rep.u_star);
                assert!(sigma(below, &p).unwrap() <= s1);
                assert!(sigma_prime(below, &p).unwrap() > 0.0);
            }
            for f in [1.01, 1.5, 4.0] {
                assert!(sigma(f * u1, &p).unwrap() <= s1);
                assert!(sigma_prime(f * u1, &p).unwrap() < 0.0);
            }
            if let Some((ua, ub)) = rep.fold_u {
                triples += 1;
                for u in [ua, ub] {
                    let pt = curve_point(u, &p).unwrap();
                    assert!(fold_denominator(pt.u, pt.v, &p).abs() <= 1e-6);
                }
            }
        }
        assert!(triples > 20);
    }
}
