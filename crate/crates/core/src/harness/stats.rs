//! Sample statistics and the one-sample Kolmogorov-Smirnov test.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{GscmError, Result};
use crate::harness::run::{read_links_csv, LinkRecord};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator).
    pub std: f64,
}

pub fn moments(xs: &[f64]) -> Moments {
    let n = xs.len();
    if n == 0 {
        return Moments {
            n,
            mean: f64::NAN,
            std: f64::NAN,
        };
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = if n > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    Moments {
        n,
        mean,
        std: var.sqrt(),
    }
}

pub fn median(xs: &[f64]) -> f64 {
    quantile(xs, 0.5)
}

/// Linear-interpolated quantile.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len().min(ys.len());
    if n < 2 {
        return f64::NAN;
    }
    let mx = xs[..n].iter().sum::<f64>() / n as f64;
    let my = ys[..n].iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (a, b) = (xs[i] - mx, ys[i] - my);
        sxy += a * b;
        sxx += a * a;
        syy += b * b;
    }
    sxy / (sxx * syy).sqrt()
}

/// Largest distance between the empirical CDF of `xs` and `cdf`. Sorts `xs`.
pub fn ks_statistic(xs: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic p-value of the KS statistic `d` for `n` samples, with the
/// usual small-sample correction to the scaling.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

/// Rayleigh CDF with scale parameter `sigma`.
pub fn rayleigh_cdf(x: f64, sigma: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        1.0 - (-x * x / (2.0 * sigma * sigma)).exp()
    }
}


/// Named sample sets and pooled moments extracted from a bundle's summary
/// CSV.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalStats {
    pub samples: BTreeMap<String, Vec<f64>>,
    pub pooled: BTreeMap<String, Moments>,
    /// Per-link geometry of each state group, used to evaluate
    /// geometry-dependent target means. Keyed like the sample groups
    /// (`scenario.state`).
    pub geometry: BTreeMap<String, Vec<LinkGeometry>>,
    pub n_links: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkGeometry {
    pub d2d: f64,
    pub h_ut: f64,
    pub h_bs: f64,
}

impl EmpiricalStats {
    fn push(&mut self, name: String, x: f64) {
        self.samples.entry(name).or_default().push(x);
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.samples.get(name).map(|v| v.as_slice())
    }

    /// Summary table: name, n, mean, std.
    pub fn summary(&self) -> Vec<(String, Moments)> {
        let mut v: Vec<(String, Moments)> = self.samples.iter().map(|(k, x)| (k.clone(), moments(x))).collect();
        v.extend(self.pooled.iter().map(|(k, m)| (k.clone(), *m)));
        v.sort_by(|a, b| a.0.cmp(&b.0));
        v
    }
}

fn parse_list(s: &str) -> Vec<f64> {
    s.split(';').filter(|t| !t.is_empty()).filter_map(|t| t.parse().ok()).collect()
}

/// Group name for a record: `scenario.state`.
pub fn group_name(r: &LinkRecord) -> String {
    format!("{}.{}", r.scenario, r.state)
}

pub fn stats_from_records(records: &[LinkRecord]) -> Result<EmpiricalStats> {
    if records.is_empty() {
        return Err(GscmError::Bundle("bundle has no link records".into()));
    }
    let mut st = EmpiricalStats {
        n_links: records.len(),
        ..Default::default()
    };
    let (mut pv_n, mut pv_sum, mut pv_sq) = (0usize, 0.0, 0.0);
    let (mut sns_hit, mut sns_total) = (0usize, 0usize);
    for r in records {
        let g = group_name(r);
        st.geometry.entry(g.clone()).or_default().push(LinkGeometry {
            d2d: r.d2d,
            h_ut: r.h_ut,
            h_bs: r.h_bs,
        });
        for (name, v) in [
            ("lgDS", r.lg_ds),
            ("lgASA", r.lg_asa),
            ("lgASD", r.lg_asd),
            ("lgZSA", r.lg_zsa),
            ("lgZSD", r.lg_zsd),
            ("SF", r.sf_db),
            ("K", r.k_db),
        ] {
            st.push(format!("{g}.{name}"), v);
        }
        if r.delta_tau_s > 0.0 {
            st.push(format!("{g}.lgDTAU"), r.delta_tau_s.log10());
        }
        if r.rays > 0 {
            st.push(format!("{g}.N"), r.n_drawn as f64);
            st.push(format!("{g}.M"), r.rays as f64);
            st.push("mean_power".into(), r.mean_power);
            if r.tensor_ds_s > 0.0 && r.ds_realized_s > 0.0 {
                st.push("tensor_ds_lg_ratio".into(), (r.tensor_ds_s / r.ds_realized_s).log10());
            }
            let n_out = r.n_clusters + usize::from(r.state == crate::scenario::LinkState::LOS);
            sns_hit += r.sns_impacted;
            sns_total += n_out;
        }
        if r.pol_var_n > 0 {
            pv_n += r.pol_var_n;
            pv_sum += r.pol_var_mean_db * r.pol_var_n as f64;
            pv_sq += r.pol_var_ms_db * r.pol_var_n as f64;
        }
        if !r.grip.is_empty() {
            for g in crate::antenna::Grip::ALL {
                st.push(format!("grip.{}", g.name()), f64::from(u8::from(r.grip == g.name())));
            }
        }
        for x in parse_list(&r.imbalance_db) {
            st.push("imbalance_db".into(), x);
        }
        for x in parse_list(&r.lg_aux_bs) {
            st.push("nf.lg_aux_bs".into(), x);
        }
    }
    if pv_n > 0 {
        let mean = pv_sum / pv_n as f64;
        let var = (pv_sq / pv_n as f64 - mean * mean).max(0.0) * pv_n as f64 / (pv_n.max(2) - 1) as f64;
        st.pooled.insert(
            "pol_var_db".into(),
            Moments {
                n: pv_n,
                mean,
                std: var.sqrt(),
            },
        );
    }
    if sns_total > 0 {
        let p = sns_hit as f64 / sns_total as f64;
        st.pooled.insert(
            "sns.impacted_fraction".into(),
            Moments {
                n: sns_total,
                mean: p,
                std: (p * (1.0 - p)).sqrt(),
            },
        );
    }
    Ok(st)
}

/// Statistics of a written bundle, read from its summary CSV.
pub fn empirical_stats(bundle: &Path) -> Result<EmpiricalStats> {
    let path = bundle.join(crate::harness::run::LINKS_CSV);
    if !path.is_file() {
        return Err(GscmError::Bundle(format!("{} not found", path.display())));
    }
    stats_from_records(&read_links_csv(&path)?)
}
