use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landscape::Objective;
use crate::rng::seeded;
use crate::Params;

/// Quadratic Bézier curve `γ(t) = (1−t)²a + 2t(1−t)φ + t²b`.
#[derive(Clone, Debug, PartialEq)]
pub struct BezierCurve {
    pub endpoint_a: Params,
    pub endpoint_b: Params,
    pub control: Params,
}

impl BezierCurve {
    /// The curve with its control at the midpoint, which traces the straight
    /// segment from `a` to `b`.
    pub fn straight(a: &Params, b: &Params) -> Result<Self> {
        a.ensure_same_layout(b)?;
        let mid = a.with_values(a.values().iter().zip(b.values()).map(|(x, y)| 0.5 * (x + y)).collect())?;
        Ok(BezierCurve {
            endpoint_a: a.clone(),
            endpoint_b: b.clone(),
            control: mid,
        })
    }

    /// Evaluated as `a + 2t(1−t)(φ−a) + t²(b−a)`, so a constant curve stays
    /// bit-exact; the endpoints are returned verbatim.
    pub fn point(&self, t: f64) -> Vec<f64> {
        if t == 0.0 {
            return self.endpoint_a.values().to_vec();
        }
        if t == 1.0 {
            return self.endpoint_b.values().to_vec();
        }
        let c1 = 2.0 * t * (1.0 - t);
        let c2 = t * t;
        self.endpoint_a
            .values()
            .iter()
            .zip(self.control.values())
            .zip(self.endpoint_b.values())
            .map(|((&a, &p), &b)| a + c1 * (p - a) + c2 * (b - a))
            .collect()
    }

    /// The same curve traversed from `b` to `a`.
    pub fn reversed(&self) -> Self {
        BezierCurve {
            endpoint_a: self.endpoint_b.clone(),
            endpoint_b: self.endpoint_a.clone(),
            control: self.control.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BezierOptions {
    pub steps: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for BezierOptions {
    fn default() -> Self {
        BezierOptions {
            steps: 100,
            lr: 0.05,
            seed: 0,
        }
    }
}

/// Fits the control point by stochastic gradient steps on `L(γ(t))` with
/// `t ~ U(0, 1)` drawn afresh each step. The endpoints never move.
pub fn fit_bezier<O: Objective + ?Sized>(a: &Params, b: &Params, obj: &O, opts: &BezierOptions) -> Result<BezierCurve> {
    let mut curve = BezierCurve::straight(a, b)?;
    if a.len() != obj.dim() {
        return Err(Error::Shape(format!(
            "endpoints have {} parameters, objective expects {}",
            a.len(),
            obj.dim()
        )));
    }
    let mut rng = seeded(opts.seed);
    for _ in 0..opts.steps {
        let t: f64 = rng.random_range(f64::EPSILON..1.0);
        let point = curve.point(t);
        let (loss, grad) = obj.loss_and_grad(&point)?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numeric(format!("non-finite loss on the curve at t = {t}")));
        }
        let scale = opts.lr * 2.0 * t * (1.0 - t);
        for (p, g) in curve.control.values_mut().iter_mut().zip(&grad) {
            *p -= scale * g;
        }
    }
    Ok(curve)
}

/// How `t*` is picked from the evaluation grid.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TStar {
    /// Largest `|½(L(a)+L(b)) − L(γ(t))|`: negative mc then means a barrier.
    #[default]
    MaxDeviation,
    /// Smallest deviation, the literal reading of the printed formula.
    MinDeviation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConnectivityReport {
    pub mc: f64,
    pub t_star: f64,
    pub curve_losses: Vec<(f64, f64)>,
    pub endpoint_mean_loss: f64,
}

pub fn t_grid(size: usize) -> Vec<f64> {
    (0..size).map(|i| i as f64 / (size - 1) as f64).collect()
}

/// `mc = ½(L(a)+L(b)) − L(γ(t*))` on a uniform grid of `grid_size` points.
/// Ties in deviation go to the earliest grid point.
pub fn mode_connectivity<O: Objective + ?Sized>(
    curve: &BezierCurve,
    obj: &O,
    grid_size: usize,
    select: TStar,
) -> Result<ConnectivityReport> {
    if grid_size < 3 || grid_size % 2 == 0 {
        return Err(Error::InvalidInput(
            "t grid needs an odd number of at least 3 points so it contains 0, 0.5 and 1".into(),
        ));
    }
    let mut curve_losses = Vec::with_capacity(grid_size);
    for t in t_grid(grid_size) {
        let l = obj.loss(&curve.point(t))?;
        if !l.is_finite() {
            return Err(Error::Numeric(format!("non-finite curve loss at t = {t}")));
        }
        curve_losses.push((t, l));
    }
    let endpoint_mean_loss = 0.5 * (curve_losses[0].1 + curve_losses[grid_size - 1].1);
    let mut best = 0;
    for (i, &(_, l)) in curve_losses.iter().enumerate() {
        let dev = (endpoint_mean_loss - l).abs();
        let cur = (endpoint_mean_loss - curve_losses[best].1).abs();
        let better = match select {
            TStar::MaxDeviation => dev > cur,
            TStar::MinDeviation => dev < cur,
        };
        if better {
            best = i;
        }
    }
    let (t_star, l_star) = curve_losses[best];
    Ok(ConnectivityReport {
        mc: endpoint_mean_loss - l_star,
        t_star,
        curve_losses,
        endpoint_mean_loss,
    })
}
