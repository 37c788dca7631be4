//! One-step hyperparameter search on a trained grid: a random-search
//! baseline against the phase-aware rule, read off the seed-mean grid.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase::{phase_grid, PhaseLabel, PhaseThresholds};
use crate::rng::{mix_seed, substream};
use crate::zoo::{collect_field, GridCell, GridField, GridSpec, GridTable, ZooManifest};

pub const MAX_MAGNITUDE: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    IncreaseWidth,
    IncreaseBatch,
    DecreaseBatch,
    None,
}

impl ActionKind {
    pub const MOVES: [ActionKind; 3] = [
        ActionKind::IncreaseWidth,
        ActionKind::IncreaseBatch,
        ActionKind::DecreaseBatch,
    ];
}

/// Move `magnitude` grid steps along one axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TuningAction {
    pub kind: ActionKind,
    pub magnitude: usize,
}

/// Magnitude uniform on `1..=5`, then kind uniform over the three moves.
///
/// The magnitude is drawn first so that a phase-aware policy fed an
/// identically seeded stream draws the same magnitude.
pub fn random_action<R: Rng + ?Sized>(rng: &mut R) -> TuningAction {
    let magnitude = rng.random_range(1..=MAX_MAGNITUDE);
    let kind = ActionKind::MOVES[rng.random_range(0..3)];
    TuningAction { kind, magnitude }
}

/// I, III widen; II enlarges the batch; IV-A shrinks it; IV-B stays put.
pub fn phase_kind(phase: PhaseLabel) -> ActionKind {
    match phase {
        PhaseLabel::I | PhaseLabel::III => ActionKind::IncreaseWidth,
        PhaseLabel::II => ActionKind::IncreaseBatch,
        PhaseLabel::IVA => ActionKind::DecreaseBatch,
        PhaseLabel::IVB => ActionKind::None,
    }
}

/// The phase's prescribed move with a magnitude uniform on `1..=5`.
pub fn phase_action<R: Rng + ?Sized>(phase: PhaseLabel, rng: &mut R) -> TuningAction {
    let magnitude = rng.random_range(1..=MAX_MAGNITUDE);
    TuningAction {
        kind: phase_kind(phase),
        magnitude,
    }
}

/// Index position on the (widths, batch sizes) lattice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridPos {
    pub wi: usize,
    pub bi: usize,
}

fn step(pos: GridPos, action: TuningAction, n_widths: usize, n_batches: usize) -> GridPos {
    let m = action.magnitude;
    match action.kind {
        ActionKind::IncreaseWidth => GridPos {
            wi: (pos.wi + m).min(n_widths - 1),
            ..pos
        },
        ActionKind::IncreaseBatch => GridPos {
            bi: (pos.bi + m).min(n_batches - 1),
            ..pos
        },
        ActionKind::DecreaseBatch => GridPos {
            bi: pos.bi.saturating_sub(m),
            ..pos
        },
        ActionKind::None => pos,
    }
}

/// Moves a cell along the grid, clamped at the edges; the seed is kept.
pub fn apply_action(cell: &GridCell, action: TuningAction, grid: &GridSpec) -> GridCell {
    let (Some(wi), Some(bi)) = (grid.width_index(cell.width), grid.batch_index(cell.batch_size)) else {
        return *cell;
    };
    let p = step(GridPos { wi, bi }, action, grid.widths.len(), grid.batch_sizes.len());
    GridCell::new(grid.widths[p.wi], grid.batch_sizes[p.bi], cell.seed)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    Random,
    PhaseAware,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub start: (usize, usize),
    pub action: TuningAction,
    pub end: (usize, usize),
    pub gain: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HpoReport {
    pub policy: Policy,
    pub mean_gain: f64,
    /// Sample standard deviation over trials.
    pub std_gain: f64,
    pub trials: usize,
    pub skipped: usize,
    pub per_trial: Vec<Trial>,
}

impl HpoReport {
    fn from_trials(policy: Policy, per_trial: Vec<Trial>, skipped: usize) -> Result<Self> {
        if per_trial.is_empty() {
            return Err(Error::SampleSize(format!("no usable {policy:?} trials")));
        }
        let n = per_trial.len() as f64;
        let mean = per_trial.iter().map(|t| t.gain).sum::<f64>() / n;
        let std = if per_trial.len() > 1 {
            (per_trial.iter().map(|t| (t.gain - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Ok(HpoReport {
            policy,
            mean_gain: mean,
            std_gain: std,
            trials: per_trial.len(),
            skipped,
            per_trial,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HpoOptions {
    pub trials: usize,
    pub seed: u64,
    /// Both policies start from the same cell and share a magnitude stream.
    pub paired: bool,
    /// Enumerate every start cell and every action instead of sampling.
    pub exhaustive: bool,
    /// Random search keeps the start cell when the move would hurt, i.e.
    /// its gain is floored at zero.
    pub keep_better: bool,
}

impl Default for HpoOptions {
    fn default() -> Self {
        HpoOptions {
            trials: 50,
            seed: 0,
            paired: true,
            exhaustive: false,
            keep_better: false,
        }
    }
}

/// Both reports plus the protocol that produced them (`hpo_report.json`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HpoOutcome {
    pub random: HpoReport,
    pub phase_aware: HpoReport,
    pub options: HpoOptions,
}

fn gain(acc: &GridTable<f64>, from: GridPos, to: GridPos) -> Option<f64> {
    Some(acc.get(to.wi, to.bi)? - acc.get(from.wi, from.bi)?)
}

fn trial(acc: &GridTable<f64>, start: GridPos, action: TuningAction, floor: bool) -> Option<Trial> {
    let (nw, nb) = acc.shape();
    let end = step(start, action, nw, nb);
    let mut g = gain(acc, start, end)?;
    if floor {
        g = g.max(0.0);
    }
    Some(Trial {
        start: (acc.widths[start.wi], acc.batch_sizes[start.bi]),
        action,
        end: (acc.widths[end.wi], acc.batch_sizes[end.bi]),
        gain: g,
    })
}

/// Runs both policies against a test-accuracy table and a phase table of
/// the same grid.
pub fn run_hpo_tables(acc: &GridTable<f64>, phases: &GridTable<PhaseLabel>, opts: &HpoOptions) -> Result<HpoOutcome> {
    if acc.shape() != phases.shape() {
        return Err(Error::Shape("accuracy and phase tables differ in shape".into()));
    }
    let (nw, nb) = acc.shape();
    let mut random = Vec::new();
    let mut aware = Vec::new();
    let (mut skip_r, mut skip_a) = (0, 0);

    let mut record = |start_r: GridPos, start_a: GridPos, act_r: TuningAction, act_a: Option<TuningAction>| {
        match trial(acc, start_r, act_r, opts.keep_better) {
            Some(t) => random.push(t),
            None => skip_r += 1,
        }
        match act_a.and_then(|a| trial(acc, start_a, a, false)) {
            Some(t) => aware.push(t),
            None => skip_a += 1,
        }
    };

    if opts.exhaustive {
        for wi in 0..nw {
            for bi in 0..nb {
                let start = GridPos { wi, bi };
                let phase = phases.get(wi, bi).copied();
                for magnitude in 1..=MAX_MAGNITUDE {
                    let act_a = phase.map(|p| TuningAction {
                        kind: phase_kind(p),
                        magnitude,
                    });
                    for kind in ActionKind::MOVES {
                        // each move is one third of the random policy's mass,
                        // so the phase-aware trial is repeated to keep weights equal
                        record(start, start, TuningAction { kind, magnitude }, act_a);
                    }
                }
            }
        }
    } else {
        if opts.trials == 0 {
            return Err(Error::InvalidInput("trials must be at least 1".into()));
        }
        let draw_start = |rng: &mut rand_chacha::ChaCha8Rng| GridPos {
            wi: rng.random_range(0..nw),
            bi: rng.random_range(0..nb),
        };
        for i in 0..opts.trials {
            let base = mix_seed(opts.seed, i as u64);
            let start_r = draw_start(&mut substream(base, 0));
            let start_a = if opts.paired {
                start_r
            } else {
                draw_start(&mut substream(base, 1))
            };
            let act_r = random_action(&mut substream(base, 2));
            let aware_stream = if opts.paired { 2 } else { 3 };
            let act_a = phases
                .get(start_a.wi, start_a.bi)
                .map(|&p| phase_action(p, &mut substream(base, aware_stream)));
            record(start_r, start_a, act_r, act_a);
        }
    }
    Ok(HpoOutcome {
        random: HpoReport::from_trials(Policy::Random, random, skip_r)?,
        phase_aware: HpoReport::from_trials(Policy::PhaseAware, aware, skip_a)?,
        options: *opts,
    })
}

/// [`run_hpo_tables`] on a zoo: seed-mean test accuracy and the phase grid
/// under `thresholds`.
pub fn run_hpo_experiment(manifest: &ZooManifest, thresholds: &PhaseThresholds, opts: &HpoOptions) -> Result<HpoOutcome> {
    let acc = collect_field(manifest, GridField::TestAcc)?;
    let phases = phase_grid(manifest, thresholds).table;
    run_hpo_tables(&acc, &phases, opts)
}
