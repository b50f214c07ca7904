//! Quantities checked against the asymptotic theory: blow-up masses, nodal
//! domains, location conditions of the bubble centres, and the large-γ
//! behaviour of critical branches.

use crate::ansatz::{exp_integrals, HybridField, NonlinearityParams, Quadrature, EXP_CLAMP};
use crate::geometry::Point;
use crate::green::{flux_profile, FluxProfile, GreenFunction, GreenResult};
use crate::grid::{GridField, NONE};
use crate::hamiltonian::{SweepReport, VortexConfig};
use crate::par::Exec;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// A named numeric check with its tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Verdict {
    /// Passes when value ≤ tolerance.
    pub fn at_most(name: &str, value: f64, tolerance: f64) -> Self {
        Verdict { name: name.into(), value, tolerance, passed: value <= tolerance }
    }

    /// Passes when value ≥ tolerance.
    pub fn at_least(name: &str, value: f64, tolerance: f64) -> Self {
        Verdict { name: name.into(), value, tolerance, passed: value >= tolerance }
    }

    pub fn flag(name: &str, passed: bool) -> Self {
        Verdict { name: name.into(), value: f64::from(u8::from(passed)), tolerance: 1.0, passed }
    }
}

/// m₊ = ρ²∫e^u, m₋ = τρ²∫e^{−γu}, λ = m₊ + m₋/γ and their limits 8π, 8π/γ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlowupMasses {
    pub m_plus: f64,
    pub m_minus: f64,
    pub lambda: f64,
    pub n1: f64,
    pub n2: f64,
    /// Limit of λ, 8π + 8π/γ².
    pub lambda_limit: f64,
    /// Some exponent of the integrands reached the clamp.
    pub saturated: bool,
}

impl BlowupMasses {
    /// Relative errors of (m₊, m₋, λ) against their limits.
    pub fn relative_errors(&self) -> [f64; 3] {
        let lim = self.lambda_limit;
        [
            (self.m_plus - self.n1).abs() / self.n1,
            (self.m_minus - self.n2).abs() / self.n2,
            (self.lambda - lim).abs() / lim,
        ]
    }
}

/// Masses by hybrid quadrature (polar rules around the analytic bubbles of
/// `u`, dual-cell node quadrature elsewhere).
pub fn blowup_masses(u: &HybridField, p: &NonlinearityParams) -> BlowupMasses {
    let q = Quadrature::for_field(u);
    let (pos, neg) = exp_integrals(&q, u, p);
    let m_minus = p.tau * neg;
    let saturated = u.interior_values().iter().any(|v| v.abs() > EXP_CLAMP || (p.gamma * v).abs() > EXP_CLAMP);
    BlowupMasses {
        m_plus: pos,
        m_minus,
        lambda: pos + m_minus / p.gamma,
        n1: 8.0 * PI,
        n2: 8.0 * PI / p.gamma,
        lambda_limit: 8.0 * PI * (1.0 + 1.0 / (p.gamma * p.gamma)),
        saturated,
    }
}

/// Relative threshold of [`nodal_domains`].
pub const NODAL_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodalComponent {
    pub sign: i8,
    pub nodes: usize,
    pub area: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodalReport {
    pub count: usize,
    pub threshold: f64,
    pub components: Vec<NodalComponent>,
    /// Per grid node: 1-based component label, 0 below threshold or exterior.
    #[serde(skip)]
    pub labels: Vec<u32>,
}

impl NodalReport {
    pub fn positive(&self) -> usize {
        self.components.iter().filter(|c| c.sign > 0).count()
    }

    pub fn negative(&self) -> usize {
        self.components.iter().filter(|c| c.sign < 0).count()
    }
}

/// Components of {|u| > rel·sup|u|} split by sign, 4-connected over
/// interior nodes.
pub fn nodal_domains(u: &GridField, rel: f64) -> NodalReport {
    let g = &u.grid;
    let threshold = rel * u.sup_norm();
    let n = g.n_interior();
    let val = |s: usize| u.values[g.interior()[s] as usize];
    let sign = |s: usize| {
        let v = val(s);
        if v > threshold {
            1i8
        } else if v < -threshold {
            -1
        } else {
            0
        }
    };
    let mut label = vec![0u32; n];
    let mut components = Vec::new();
    let mut stack = Vec::new();
    for start in 0..n {
        let sg = sign(start);
        if sg == 0 || label[start] != 0 {
            continue;
        }
        let id = components.len() as u32 + 1;
        let mut comp = NodalComponent { sign: sg, nodes: 0, area: 0.0 };
        label[start] = id;
        stack.push(start);
        while let Some(s) = stack.pop() {
            comp.nodes += 1;
            comp.area += g.weight(s);
            for t in g.neighbors(s) {
                if t != NONE {
                    let t = t as usize;
                    if label[t] == 0 && sign(t) == sg {
                        label[t] = id;
                        stack.push(t);
                    }
                }
            }
        }
        components.push(comp);
    }
    let mut labels = vec![0u32; g.len()];
    for (s, &k) in g.interior().iter().enumerate() {
        labels[k as usize] = label[s];
    }
    NodalReport { count: components.len(), threshold, components, labels }
}

/// Norms of ∇_ξ[H(ξ,ξ₁) − G(ξ,ξ₂)/γ] at ξ₁ and ∇_ξ[H(ξ,ξ₂)/γ − G(ξ,ξ₁)] at ξ₂,
/// by central differences in the first argument.
pub fn location_conditions<E: GreenFunction + ?Sized>(e: &E, cfg: &VortexConfig) -> GreenResult<(f64, f64)> {
    let h = 1e-5 * e.shape().diameter();
    let g = cfg.gamma;
    let grad = |f: &dyn Fn(Point) -> GreenResult<f64>, x: Point| -> GreenResult<f64> {
        let mut d = [0.0; 2];
        for k in 0..2 {
            let (mut p, mut m) = (x, x);
            p[k] += h;
            m[k] -= h;
            d[k] = (f(p)? - f(m)?) / (2.0 * h);
        }
        Ok(d[0].hypot(d[1]))
    };
    let r1 = grad(&|x| Ok(e.regular_part(x, cfg.xi1)? - e.green(x, cfg.xi2)? / g), cfg.xi1)?;
    let r2 = grad(&|x| Ok(e.regular_part(x, cfg.xi2)? / g - e.green(x, cfg.xi1)?), cfg.xi2)?;
    Ok((r1, r2))
}

/// Per-record quantities of a γ branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticsRow {
    pub gamma: f64,
    pub dist_boundary: f64,
    pub dist_argmax: f64,
    /// Angular gap between the escaping vortex's boundary projection and the
    /// nearest minimizer of |∂νG(argmax h, ·)|; absent when that is constant.
    pub theta_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticsReport {
    pub mirrored: bool,
    pub argmax_h: Point,
    pub profile: FluxProfile,
    /// The flux minimizer is not unique.
    pub degenerate_minimizer: bool,
    pub rows: Vec<AsymptoticsRow>,
    pub verdicts: Vec<Verdict>,
}

impl AsymptoticsReport {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }
}

/// Tolerances of [`asymptotics_report`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AsymptoticsTolerances {
    /// Final |ξ_c − argmax h| as a fraction of the diameter.
    pub argmax_fraction: f64,
    /// Final angular gap in radians.
    pub theta_gap: f64,
    /// Slack allowed when checking that gaps do not increase.
    pub monotone_slack: f64,
    pub flux_samples: usize,
}

impl Default for AsymptoticsTolerances {
    fn default() -> Self {
        AsymptoticsTolerances { argmax_fraction: 0.02, theta_gap: 0.05, monotone_slack: 1e-6, flux_samples: 1024 }
    }
}

/// Trends of a γ sweep: distance of the escaping vortex to ∂Ω (strictly
/// decreasing), distance of the concentrating vortex to argmax h and the
/// boundary-parameter gap (non-increasing up to the slack, small at the end).
pub fn asymptotics_report<E: GreenFunction + ?Sized>(
    sweep: &SweepReport,
    e: &E,
    tol: &AsymptoticsTolerances,
) -> GreenResult<AsymptoticsReport> {
    let shape = e.shape();
    let profile = flux_profile(e, sweep.argmax_h, tol.flux_samples, Exec::default())?;
    let rows: Vec<AsymptoticsRow> = sweep
        .records
        .iter()
        .map(|r| AsymptoticsRow {
            gamma: r.gamma,
            dist_boundary: r.dist_boundary,
            dist_argmax: r.dist_argmax,
            theta_gap: profile.gap(r.boundary_theta),
        })
        .collect();
    let mut verdicts = Vec::new();
    let complete = sweep.lost.is_none() && !rows.is_empty();
    verdicts.push(Verdict::flag("branch followed over the whole schedule", complete));
    let strictly = rows.windows(2).all(|w| w[1].dist_boundary < w[0].dist_boundary);
    verdicts.push(Verdict::flag("distance to the boundary strictly decreasing", strictly));
    let slack = tol.monotone_slack;
    let argmax_mono = rows.windows(2).all(|w| w[1].dist_argmax <= w[0].dist_argmax + slack);
    verdicts.push(Verdict::flag("distance to argmax h non-increasing", argmax_mono));
    if let Some(last) = rows.last() {
        verdicts.push(Verdict::at_most(
            "final distance to argmax h / diameter",
            last.dist_argmax / shape.diameter(),
            tol.argmax_fraction,
        ));
        if let Some(gap) = last.theta_gap {
            let gaps: Vec<f64> = rows.iter().filter_map(|r| r.theta_gap).collect();
            let mono = gaps.windows(2).all(|w| w[1] <= w[0] + slack);
            verdicts.push(Verdict::flag("boundary gap non-increasing", mono));
            verdicts.push(Verdict::at_most("final boundary gap (rad)", gap, tol.theta_gap));
        }
    }
    Ok(AsymptoticsReport {
        mirrored: sweep.mirrored,
        argmax_h: sweep.argmax_h,
        degenerate_minimizer: profile.degenerate(),
        profile,
        rows,
        verdicts,
    })
}
