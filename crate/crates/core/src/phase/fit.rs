use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase::label::{classify, MetricRecord, PhaseLabel, PhaseThresholds};

/// Search interval per threshold; `None` derives it from the data range.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThresholdBounds {
    pub loss: Option<(f64, f64)>,
    pub mc: (f64, f64),
    pub cka: (f64, f64),
    pub trace: Option<(f64, f64)>,
}

impl Default for ThresholdBounds {
    fn default() -> Self {
        ThresholdBounds {
            loss: None,
            mc: (-1.0, 0.0),
            cka: (0.0, 1.0),
            trace: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub thresholds: PhaseThresholds,
    pub train_accuracy: f64,
    /// Accuracy below one half.
    pub low_confidence: bool,
    pub max_class_frequency: f64,
    pub n_records: usize,
}

pub fn tree_accuracy(records: &[MetricRecord], labels: &[PhaseLabel], t: &PhaseThresholds) -> f64 {
    let hits = records
        .iter()
        .zip(labels)
        .filter(|(r, l)| classify(r, t) == **l)
        .count();
    hits as f64 / records.len() as f64
}

const GRID_POINTS: usize = 257;
const BISECTIONS: usize = 60;

/// Maximizes a piecewise-constant `f` over `[lo, hi]`.
///
/// `f` is evaluated on a uniform grid plus every data value and every
/// midpoint between consecutive data values, so each constant piece whose
/// edges are data values gets sampled. The widest run of best candidates is
/// taken as the optimal plateau (first on ties), its edges are shrunk onto
/// the true breakpoints by bisection, and the plateau midpoint is returned
/// if it scores the best value; otherwise the best candidate itself.
pub fn maximize_plateau(lo: f64, hi: f64, data: &[f64], f: impl Fn(f64) -> f64) -> (f64, f64) {
    let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let mut cands: Vec<f64> = (0..GRID_POINTS)
        .map(|i| lo + (hi - lo) * i as f64 / (GRID_POINTS - 1) as f64)
        .collect();
    let mut pts: Vec<f64> = data.iter().copied().filter(|v| v.is_finite() && *v >= lo && *v <= hi).collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    cands.extend(pts.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    cands.extend(pts);
    cands.sort_by(f64::total_cmp);
    cands.dedup();

    let vals: Vec<f64> = cands.iter().map(|&x| f(x)).collect();
    let best = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let shrink = |mut inside: f64, mut outside: f64| {
        for _ in 0..BISECTIONS {
            let mid = 0.5 * (inside + outside);
            if f(mid) == best {
                inside = mid;
            } else {
                outside = mid;
            }
        }
        inside
    };

    let mut plateau: Option<(f64, f64)> = None;
    let mut i = 0;
    while i < cands.len() {
        if vals[i] != best {
            i += 1;
            continue;
        }
        let start = i;
        while i + 1 < cands.len() && vals[i + 1] == best {
            i += 1;
        }
        let left = if start > 0 { shrink(cands[start], cands[start - 1]) } else { cands[start] };
        let right = if i + 1 < cands.len() { shrink(cands[i], cands[i + 1]) } else { cands[i] };
        if plateau.is_none_or(|(a, b)| right - left > b - a) {
            plateau = Some((left, right));
        }
        i += 1;
    }
    let (a, b) = plateau.expect("at least one candidate attains the maximum");
    let mid = 0.5 * (a + b);
    if f(mid) == best {
        (mid, best)
    } else {
        (a, best)
    }
}

fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let pad = 0.01 * (hi - lo) + 1e-12 * lo.abs().max(hi.abs()).max(1.0);
    (lo - pad, hi + pad)
}

fn coverage(labels: &[PhaseLabel]) -> Result<()> {
    let missing: Vec<String> = PhaseLabel::ALL
        .iter()
        .filter(|p| !labels.contains(p))
        .map(|p| p.token().to_string())
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::Coverage { missing })
    }
}

fn merge_iv(l: PhaseLabel) -> PhaseLabel {
    if l == PhaseLabel::IVB {
        PhaseLabel::IVA
    } else {
        l
    }
}

const MAX_CANDIDATES: usize = 256;

/// Candidate cut points on `[lo, hi]`: the bounds plus every midpoint
/// between consecutive distinct data values, thinned evenly by rank to at
/// most `MAX_CANDIDATES`.
fn cut_candidates(values: impl Iterator<Item = f64>, lo: f64, hi: f64) -> Vec<f64> {
    let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let mut v: Vec<f64> = values.filter(|x| x.is_finite() && *x >= lo && *x <= hi).collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    let mut c = vec![lo];
    c.extend(v.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    c.push(hi);
    if c.len() > MAX_CANDIDATES {
        let step = (c.len() - 1) as f64 / (MAX_CANDIDATES - 1) as f64;
        c = (0..MAX_CANDIDATES).map(|i| c[(i as f64 * step).round() as usize]).collect();
    }
    c
}

/// Exhaustive search over a product of candidate lists; first maximum wins.
fn best_pair(xs: &[f64], ys: &[f64], score: impl Fn(f64, f64) -> usize) -> (f64, f64) {
    let mut best = (xs[0], ys[0], score(xs[0], ys[0]));
    for &x in xs {
        for &y in ys {
            let s = score(x, y);
            if s > best.2 {
                best = (x, y, s);
            }
        }
    }
    (best.0, best.1)
}

/// Fits the four cut points of the tree.
///
/// The upper split `(tau_loss, tau_mc)` is searched jointly over candidate
/// cut points, scoring with IV-A and IV-B merged; the IV split
/// `(tau_cka, tau_trace)` is then searched jointly on the records routed to
/// IV, with `tau_trace = ∞` preferred on ties. Each finite threshold is then
/// moved to the middle of its optimal plateau by [`maximize_plateau`], and
/// up to three coordinate sweeps accept strict improvements only.
pub fn fit_thresholds(records: &[MetricRecord], labels: &[PhaseLabel], bounds: &ThresholdBounds) -> Result<FitReport> {
    if records.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} records but {} labels",
            records.len(),
            labels.len()
        )));
    }
    coverage(labels)?;
    if let Some(bad) = records.iter().position(|r| !r.is_finite()) {
        return Err(Error::InvalidInput(format!("record {bad} has non-finite metrics")));
    }
    let col = |f: fn(&MetricRecord) -> f64| records.iter().map(f).collect::<Vec<f64>>();
    let losses = col(|r| r.train_loss);
    let mcs = col(|r| r.mc);
    let ckas = col(|r| r.cka);
    let traces = col(|r| r.hessian_trace);
    let loss_b = bounds.loss.unwrap_or_else(|| padded_range(losses.iter().copied()));
    let trace_b = bounds.trace.unwrap_or_else(|| padded_range(traces.iter().copied()));
    let n = records.len() as f64;

    let mut t = PhaseThresholds {
        tau_loss: loss_b.1,
        tau_mc: bounds.mc.1.min(0.0),
        tau_cka: bounds.cka.0.max(0.0),
        tau_trace: f64::INFINITY,
    };
    let (tau_loss, tau_mc) = best_pair(
        &cut_candidates(losses.iter().copied(), loss_b.0, loss_b.1),
        &cut_candidates(mcs.iter().copied(), bounds.mc.0, bounds.mc.1),
        |tl, tm| {
            let th = PhaseThresholds { tau_loss: tl, tau_mc: tm, ..t };
            records
                .iter()
                .zip(labels)
                .filter(|(r, l)| merge_iv(classify(r, &th)) == merge_iv(**l))
                .count()
        },
    );
    t.tau_loss = tau_loss;
    t.tau_mc = tau_mc;

    let routed: Vec<(&MetricRecord, PhaseLabel)> = records
        .iter()
        .zip(labels)
        .filter(|(r, _)| matches!(classify(r, &t), PhaseLabel::IVA | PhaseLabel::IVB))
        .map(|(r, l)| (r, *l))
        .collect();
    if !routed.is_empty() {
        let mut trace_c = vec![f64::INFINITY];
        trace_c.extend(cut_candidates(routed.iter().map(|(r, _)| r.hessian_trace), trace_b.0, trace_b.1));
        let (tau_cka, tau_trace) = best_pair(
            &cut_candidates(routed.iter().map(|(r, _)| r.cka), bounds.cka.0, bounds.cka.1),
            &trace_c,
            |tc, tt| {
                let th = PhaseThresholds { tau_cka: tc, tau_trace: tt, ..t };
                routed.iter().filter(|(r, l)| classify(r, &th) == *l).count()
            },
        );
        t.tau_cka = tau_cka;
        t.tau_trace = tau_trace;
    }

    let set = |t: PhaseThresholds, which: usize, tau: f64| {
        let mut th = t;
        match which {
            0 => th.tau_loss = tau,
            1 => th.tau_mc = tau,
            2 => th.tau_cka = tau,
            _ => th.tau_trace = tau,
        }
        th
    };
    let axis = |which: usize| match which {
        0 => (loss_b.0, loss_b.1, &losses),
        1 => (bounds.mc.0, bounds.mc.1, &mcs),
        2 => (bounds.cka.0, bounds.cka.1, &ckas),
        _ => (trace_b.0, trace_b.1, &traces),
    };
    let sweep = |t: &mut PhaseThresholds, accept_ties: bool| {
        let mut improved = false;
        for which in 0..4 {
            if accept_ties && which == 3 && !t.tau_trace.is_finite() {
                continue;
            }
            let current = tree_accuracy(records, labels, t);
            let (lo, hi, data) = axis(which);
            let (tau, acc) = maximize_plateau(lo, hi, data, |tau| tree_accuracy(records, labels, &set(*t, which, tau)));
            if acc > current || (accept_ties && acc == current) {
                improved |= acc > current;
                *t = set(*t, which, tau);
            }
        }
        improved
    };
    // center each cut point on its optimal plateau, then polish
    sweep(&mut t, true);
    for _ in 0..3 {
        if !sweep(&mut t, false) {
            break;
        }
    }

    let train_accuracy = tree_accuracy(records, labels, &t);
    let max_class_frequency = PhaseLabel::ALL
        .iter()
        .map(|p| labels.iter().filter(|l| *l == p).count())
        .max()
        .unwrap_or(0) as f64
        / n;
    Ok(FitReport {
        thresholds: t,
        train_accuracy,
        low_confidence: train_accuracy < 0.5,
        max_class_frequency,
        n_records: records.len(),
    })
}

/// Linearly interpolated quantile of unsorted values; `values` must be non-empty.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Provisional thresholds from quantiles, for zoos without annotated
/// reference models.
///
/// `tau_loss` is the geometric midpoint of the lowest and highest train
/// loss; `tau_mc` the lower quartile of mc, clamped into `[-1, 0]`;
/// `tau_cka` and `tau_trace` the medians of CKA and trace among the
/// low-loss records.
pub fn bootstrap_thresholds(records: &[MetricRecord]) -> Result<PhaseThresholds> {
    if records.is_empty() {
        return Err(Error::SampleSize("no records to bootstrap thresholds from".into()));
    }
    let losses: Vec<f64> = records.iter().map(|r| r.train_loss.max(1e-12)).collect();
    let lmin = quantile(&losses, 0.0);
    let lmax = quantile(&losses, 1.0);
    let tau_loss = (lmin * lmax).sqrt();
    let mcs: Vec<f64> = records.iter().map(|r| r.mc).collect();
    let tau_mc = quantile(&mcs, 0.25).clamp(-1.0, 0.0);
    let low: Vec<&MetricRecord> = records.iter().filter(|r| r.train_loss <= tau_loss).collect();
    let pool: Vec<&MetricRecord> = if low.is_empty() { records.iter().collect() } else { low };
    let ckas: Vec<f64> = pool.iter().map(|r| r.cka).collect();
    let traces: Vec<f64> = pool.iter().map(|r| r.hessian_trace).collect();
    Ok(PhaseThresholds {
        tau_loss,
        tau_mc,
        tau_cka: quantile(&ckas, 0.5).clamp(0.0, 1.0),
        tau_trace: quantile(&traces, 0.5),
    })
}

/// Provisional reference labels: the bootstrap thresholds applied to the
/// records themselves.
pub fn bootstrap_labels(records: &[MetricRecord]) -> Result<(PhaseThresholds, Vec<PhaseLabel>)> {
    let t = bootstrap_thresholds(records)?;
    Ok((t, records.iter().map(|r| classify(r, &t)).collect()))
}
