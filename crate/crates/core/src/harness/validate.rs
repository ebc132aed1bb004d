//! Checks realized statistics against the distributions the generator used.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{GscmError, Result};
use crate::harness::config::RunConfig;
use crate::harness::stats::{ks_p_value, ks_statistic, moments, EmpiricalStats};
use crate::lsp::{LspParam, LspTable};
use crate::scenario::LinkState;
use crate::sns::SnsMode;

/// Family-wise significance level shared by all KS checks in a report.
pub const KS_ALPHA: f64 = 0.01;
/// Groups with fewer samples are not checked.
pub const MIN_GROUP: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Target {
    /// Mean and standard deviation. `mean` holds one value, or one value per
    /// sample when the expected mean depends on link geometry.
    Moments {
        mean: Vec<f64>,
        std: f64,
        mean_tol: f64,
        std_tol: f64,
    },
    /// KS test of the residuals `x - mean` against a zero-mean normal.
    Normal { mean: Vec<f64>, std: f64 },
    /// KS test against a uniform distribution.
    Uniform { lo: f64, hi: f64 },
    /// Every sample inside `[min, max]`.
    Support { min: f64, max: f64 },
    /// Mean of 0/1 indicators (or a pooled fraction).
    Proportion { p: f64, tol: f64 },
    /// Mean within an absolute tolerance.
    Mean { value: f64, tol: f64 },
    /// Standard deviation of a pooled statistic.
    PooledStd { std: f64, tol: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub name: String,
    pub target: Target,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub kind: String,
    pub target: String,
    pub empirical: String,
    /// Deviation from the target, or the KS p-value for shape checks.
    pub statistic: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
    pub passed: bool,
}

impl ValidationReport {
    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.pass)
    }

    pub fn to_table(&self) -> String {
        let w = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(4).max(4);
        let mut s = format!(
            "{:<w$}  {:<10}  {:<28}  {:<28}  {:>10}  {:>9}  result\n",
            "name", "kind", "target", "empirical", "statistic", "tolerance"
        );
        for c in &self.checks {
            s += &format!(
                "{:<w$}  {:<10}  {:<28}  {:<28}  {:>10.4e}  {:>9.3e}  {}\n",
                c.name,
                c.kind,
                c.target,
                c.empirical,
                c.statistic,
                c.tolerance,
                if c.pass { "PASS" } else { "FAIL" }
            );
        }
        s += &format!(
            "{} checks, {} failed\n",
            self.checks.len(),
            self.checks.iter().filter(|c| !c.pass).count()
        );
        s
    }
}

fn expand(mean: &[f64], n: usize) -> Result<Vec<f64>> {
    match mean.len() {
        1 => Ok(vec![mean[0]; n]),
        k if k == n => Ok(mean.to_vec()),
        k => Err(GscmError::DimensionMismatch {
            axis: "target means",
            expected: n,
            got: k,
        }),
    }
}

fn avg(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Runs every target against `stats`. Unknown names are an error.
pub fn validate(stats: &EmpiricalStats, targets: &[TargetSpec]) -> Result<ValidationReport> {
    let n_ks = targets
        .iter()
        .filter(|t| matches!(t.target, Target::Normal { .. } | Target::Uniform { .. }))
        .count()
        .max(1);
    let alpha = KS_ALPHA / n_ks as f64;
    let mut checks = Vec::with_capacity(targets.len());
    for t in targets {
        let pooled = stats.pooled.get(&t.name);
        let samples = stats.get(&t.name);
        if pooled.is_none() && samples.is_none() {
            return Err(GscmError::UnknownStatistic(t.name.clone()));
        }
        let need = || samples.ok_or_else(|| GscmError::UnknownStatistic(t.name.clone()));
        let c = match &t.target {
            Target::Moments {
                mean,
                std,
                mean_tol,
                std_tol,
            } => {
                let x = need()?;
                let mu = expand(mean, x.len())?;
                let resid: Vec<f64> = x.iter().zip(&mu).map(|(a, b)| a - b).collect();
                let m = moments(&resid);
                let dm = m.mean.abs();
                let ds = (m.std - std).abs();
                let target_mean = avg(&mu);
                vec![
                    CheckResult {
                        name: format!("{} mean", t.name),
                        kind: "mean".into(),
                        target: format!("{target_mean:.4}"),
                        empirical: format!("{:.4} (n={})", target_mean + m.mean, m.n),
                        statistic: dm,
                        tolerance: *mean_tol,
                        pass: dm <= *mean_tol,
                    },
                    CheckResult {
                        name: format!("{} std", t.name),
                        kind: "std".into(),
                        target: format!("{std:.4}"),
                        empirical: format!("{:.4}", m.std),
                        statistic: ds,
                        tolerance: *std_tol,
                        pass: ds <= *std_tol,
                    },
                ]
            }
            Target::Normal { mean, std } => {
                let x = need()?;
                let mu = expand(mean, x.len())?;
                let mut resid: Vec<f64> = x.iter().zip(&mu).map(|(a, b)| a - b).collect();
                let (d, p) = if *std > 0.0 {
                    let nd = Normal::new(0.0, *std).map_err(|e| GscmError::Bundle(e.to_string()))?;
                    let d = ks_statistic(&mut resid, |v| nd.cdf(v));
                    (d, ks_p_value(d, resid.len()))
                } else {
                    let d = resid.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                    (d, if d == 0.0 { 1.0 } else { 0.0 })
                };
                vec![CheckResult {
                    name: format!("{} shape", t.name),
                    kind: "ks-normal".into(),
                    target: format!("N(0, {std:.3}^2) residual"),
                    empirical: format!("D={d:.4}"),
                    statistic: p,
                    tolerance: alpha,
                    pass: p > alpha,
                }]
            }
            Target::Uniform { lo, hi } => {
                let mut x = need()?.to_vec();
                let d = ks_statistic(&mut x, |v| ((v - lo) / (hi - lo)).clamp(0.0, 1.0));
                let p = ks_p_value(d, x.len());
                vec![CheckResult {
                    name: format!("{} shape", t.name),
                    kind: "ks-uniform".into(),
                    target: format!("U[{lo}, {hi}]"),
                    empirical: format!("D={d:.4}"),
                    statistic: p,
                    tolerance: alpha,
                    pass: p > alpha,
                }]
            }
            Target::Support { min, max } => {
                let x = need()?;
                let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let outside = x.iter().filter(|v| **v < *min || **v > *max).count();
                vec![CheckResult {
                    name: t.name.clone(),
                    kind: "support".into(),
                    target: format!("[{min}, {max}]"),
                    empirical: format!("[{lo}, {hi}]"),
                    statistic: outside as f64,
                    tolerance: 0.0,
                    pass: outside == 0,
                }]
            }
            Target::Proportion { p, tol } => {
                let (v, n) = match (pooled, samples) {
                    (Some(m), _) => (m.mean, m.n),
                    (None, Some(x)) => (avg(x), x.len()),
                    _ => unreachable!(),
                };
                let d = (v - p).abs();
                vec![CheckResult {
                    name: t.name.clone(),
                    kind: "fraction".into(),
                    target: format!("{p:.4}"),
                    empirical: format!("{v:.4} (n={n})"),
                    statistic: d,
                    tolerance: *tol,
                    pass: d <= *tol,
                }]
            }
            Target::Mean { value, tol } => {
                let v = match (pooled, samples) {
                    (Some(m), _) => m.mean,
                    (None, Some(x)) => avg(x),
                    _ => unreachable!(),
                };
                let d = (v - value).abs();
                vec![CheckResult {
                    name: format!("{} mean", t.name),
                    kind: "mean".into(),
                    target: format!("{value:.4}"),
                    empirical: format!("{v:.4}"),
                    statistic: d,
                    tolerance: *tol,
                    pass: d <= *tol,
                }]
            }
            Target::PooledStd { std, tol } => {
                let m = match (pooled, samples) {
                    (Some(m), _) => *m,
                    (None, Some(x)) => moments(x),
                    _ => unreachable!(),
                };
                let d = (m.std - std).abs();
                vec![CheckResult {
                    name: format!("{} std", t.name),
                    kind: "std".into(),
                    target: format!("{std:.4}"),
                    empirical: format!("{:.4} (n={})", m.std, m.n),
                    statistic: d,
                    tolerance: *tol,
                    pass: d <= *tol,
                }]
            }
        };
        checks.extend(c);
    }
    let passed = checks.iter().all(|c| c.pass);
    Ok(ValidationReport { checks, passed })
}

/// Tolerance for a sample mean: four standard errors, never below `floor`.
fn mean_tol(sigma: f64, n: usize, floor: f64) -> f64 {
    (4.0 * sigma / (n as f64).sqrt()).max(floor)
}

/// Tolerance for a sample standard deviation of a normal population.
fn std_tol(sigma: f64, n: usize, floor: f64) -> f64 {
    (4.0 * sigma / (2.0 * n as f64).sqrt()).max(floor)
}

/// Builds targets for every statistic the run produced, from the same table
/// objects the generator consumed.
pub fn default_targets(cfg: &RunConfig, table: &LspTable, stats: &EmpiricalStats) -> Result<Vec<TargetSpec>> {
    let scen = cfg.scenario_config()?;
    let f = cfg.features;
    let mut out = Vec::new();
    let mut push = |name: String, target: Target| out.push(TargetSpec { name, target });
    for state in [LinkState::LOS, LinkState::NLOS, LinkState::O2I] {
        let g = format!("{}.{}", scen.scenario.name(), state);
        let Some(geo) = stats.geometry.get(&g) else { continue };
        let n = geo.len();
        if n < MIN_GROUP {
            continue;
        }
        let d = table.lookup(scen.scenario, state, scen.fc_ghz)?;
        for (p, name) in [
            (LspParam::DS, "lgDS"),
            (LspParam::ASA, "lgASA"),
            (LspParam::ASD, "lgASD"),
            (LspParam::ZSA, "lgZSA"),
            (LspParam::ZSD, "lgZSD"),
            (LspParam::SF, "SF"),
            (LspParam::K, "K"),
        ] {
            if !d.present[p.index()] {
                continue;
            }
            let mean: Vec<f64> = geo.iter().map(|l| d.mean_for(p, l.d2d, l.h_ut, l.h_bs)).collect();
            let sigma = d.sigma_of(p);
            let floor = if p == LspParam::SF || p == LspParam::K { 0.1 } else { 0.01 };
            push(
                format!("{g}.{name}"),
                Target::Moments {
                    mean: mean.clone(),
                    std: sigma,
                    mean_tol: mean_tol(sigma, n, floor),
                    std_tol: std_tol(sigma, n, floor),
                },
            );
            if p == LspParam::DS {
                push(format!("{g}.{name}"), Target::Normal { mean, std: sigma });
            }
        }
        if let Some(t) = &d.toa {
            if state != LinkState::LOS && stats.get(&format!("{g}.lgDTAU")).is_some() {
                push(
                    format!("{g}.lgDTAU"),
                    Target::Moments {
                        mean: vec![t.mu_lg],
                        std: t.sigma_lg,
                        mean_tol: mean_tol(t.sigma_lg, n, 0.01),
                        std_tol: std_tol(t.sigma_lg, n, 0.01),
                    },
                );
            }
        }
        if cfg.sim.coefficients {
            let s = &d.small;
            let (lo, hi) = if f.variable_clusters {
                (s.d_min, s.d_max)
            } else {
                (s.n_fixed, s.n_fixed)
            };
            push(
                format!("{g}.N"),
                Target::Support {
                    min: lo as f64,
                    max: hi as f64,
                },
            );
            let m_lo = if f.variable_rays { cfg.sim.min_rays.min(20) } else { 20 };
            push(
                format!("{g}.M"),
                Target::Support {
                    min: m_lo as f64,
                    max: 20.0,
                },
            );
        }
    }
    if cfg.sim.coefficients {
        if stats.get("tensor_ds_lg_ratio").is_some() {
            // Patterns reweight clusters, so this is a loose consistency check.
            push("tensor_ds_lg_ratio".into(), Target::Mean { value: 0.0, tol: 0.3 });
        }
        if f.pol_variability {
            if let Some(m) = stats.pooled.get("pol_var_db") {
                let s = cfg.sim.pol_var_sigma_db;
                push("pol_var_db".into(), Target::Mean { value: 0.0, tol: mean_tol(s, m.n, 0.05) });
                push("pol_var_db".into(), Target::PooledStd { std: s, tol: std_tol(s, m.n, 0.05) });
            }
        } else if stats.pooled.contains_key("pol_var_db") {
            push("pol_var_db".into(), Target::PooledStd { std: 0.0, tol: 0.0 });
        }
        if f.grip {
            for (g, p) in crate::antenna::Grip::ALL.iter().zip(cfg.sim.grip_probs.0) {
                let name = format!("grip.{}", g.name());
                if let Some(x) = stats.get(&name) {
                    let tol = mean_tol((p * (1.0 - p)).sqrt(), x.len(), 0.01);
                    push(name, Target::Proportion { p, tol });
                }
            }
        }
        if f.imbalance && stats.get("imbalance_db").is_some() {
            let (lo, hi) = cfg.sim.imbalance_range_db;
            push("imbalance_db".into(), Target::Uniform { lo, hi });
            push("imbalance_db".into(), Target::Support { min: lo, max: hi });
        }
        if f.nf && stats.get("nf.lg_aux_bs").is_some() {
            let a = &cfg.sim.aux_dist;
            let n = stats.get("nf.lg_aux_bs").map_or(0, |x| x.len());
            push(
                "nf.lg_aux_bs".into(),
                Target::Moments {
                    mean: vec![a.mu_lg_bs],
                    std: a.sigma_lg_bs,
                    mean_tol: mean_tol(a.sigma_lg_bs, n, 0.01),
                    std_tol: std_tol(a.sigma_lg_bs, n, 0.01),
                },
            );
        }
        if let Some(m) = stats.pooled.get("sns.impacted_fraction") {
            match f.sns {
                SnsMode::Stochastic => {
                    let p = 1.0 - cfg.sim.sns.visibility_prob;
                    let tol = mean_tol((p * (1.0 - p)).sqrt(), m.n, 0.01);
                    push("sns.impacted_fraction".into(), Target::Proportion { p, tol });
                }
                SnsMode::Physical => push("sns.impacted_fraction".into(), Target::Support { min: 0.0, max: 1.0 }),
                SnsMode::Off => push("sns.impacted_fraction".into(), Target::Proportion { p: 0.0, tol: 0.0 }),
            }
        }
    }
    Ok(out)
}

/// Inverse of the standard normal CDF, exposed for report consumers.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::new(0.0, 1.0).map(|n| n.inverse_cdf(p)).unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{ModuleTag, StreamKey};

    fn normal_stats(mu: f64, n: usize) -> EmpiricalStats {
        let mut r = StreamKey::new(81).module(ModuleTag::Harness).stream();
        let mut st = EmpiricalStats::default();
        st.samples.insert("x".into(), (0..n).map(|_| r.normal(mu, 1.0)).collect());
        st
    }

    fn std_normal(tol: f64) -> Vec<TargetSpec> {
        vec![
            TargetSpec {
                name: "x".into(),
                target: Target::Moments {
                    mean: vec![0.0],
                    std: 1.0,
                    mean_tol: tol,
                    std_tol: tol,
                },
            },
            TargetSpec {
                name: "x".into(),
                target: Target::Normal {
                    mean: vec![0.0],
                    std: 1.0,
                },
            },
        ]
    }

    #[test]
    fn matching_normal_passes() {
        let r = validate(&normal_stats(0.0, 10_000), &std_normal(0.05)).unwrap();
        assert!(r.passed, "{}", r.to_table());
    }

    #[test]
    fn shifted_normal_fails_on_mean() {
        let r = validate(&normal_stats(1.0, 10_000), &std_normal(0.05)).unwrap();
        assert!(!r.passed);
        let failed: Vec<_> = r.failures().map(|c| c.kind.as_str()).collect();
        assert!(failed.contains(&"mean") && !failed.contains(&"std"), "{failed:?}");
    }

    #[test]
    fn unknown_statistic_is_error() {
        let t = vec![TargetSpec {
            name: "nope".into(),
            target: Target::Support { min: 0.0, max: 1.0 },
        }];
        assert!(matches!(validate(&normal_stats(0.0, 10), &t), Err(GscmError::UnknownStatistic(_))));
    }

    #[test]
    fn quantile_helper() {
        assert!((normal_quantile(0.975) - 1.959964).abs() < 1e-5);
    }
}
