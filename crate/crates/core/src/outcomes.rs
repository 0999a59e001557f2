//! Per-tier academic-outcome regressions and sequential outcome
//! imputation.
//!
//! Four stages are fit per tier, each conditioning on survival of the
//! previous ones: dropout (everyone), skipping the bar (graduates),
//! first-try passage (attempters), later-try passage (first-try
//! failers). Imputation walks the same sequence with Bernoulli draws.

use nalgebra::DVector;
use rand::Rng;

use crate::dataset::{OutcomeClass, Race, StudentRecord};
use crate::error::{Error, Result};
use crate::logit::{self, LogitModel, PriorConfig};
use crate::ses::SesGroup;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Dropout,
    SkipBar,
    PassFirst,
    PassLater,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Dropout, Stage::SkipBar, Stage::PassFirst, Stage::PassLater];

    pub fn index(self) -> usize {
        match self {
            Stage::Dropout => 0,
            Stage::SkipBar => 1,
            Stage::PassFirst => 2,
            Stage::PassLater => 3,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Stage::Dropout => "dropout",
            Stage::SkipBar => "skip_bar",
            Stage::PassFirst => "pass_first",
            Stage::PassLater => "pass_later",
        }
    }
}

/// Coefficient names in export order (intercept first).
pub const COEF_NAMES: [&str; 9] = [
    "Intercept",
    "Female",
    "LSAT",
    "LSAT percentile",
    "UGPA",
    "Black",
    "Low SES",
    "LSAT percentile:Black",
    "LSAT percentile:Low SES",
];

/// The 4 stages x 5 tiers fitted models.
#[derive(Debug, Clone)]
pub struct OutcomeModelSet {
    /// `models[stage][tier-1]`.
    pub models: Vec<Vec<LogitModel>>,
    pub warnings: Vec<String>,
}

impl OutcomeModelSet {
    pub fn model(&self, stage: Stage, tier: u8) -> &LogitModel {
        &self.models[stage.index()][(tier - 1) as usize]
    }
}

/// Midrank LSAT percentile within each assigned tier:
/// (#strictly lower + 0.5 * #ties) / tier size.
pub fn recompute_lsat_percentiles(tiers: &[u8], records: &[StudentRecord]) -> Vec<f64> {
    assert_eq!(tiers.len(), records.len());
    let mut out = vec![0.0; records.len()];
    for tier in 1..=5u8 {
        let idxs: Vec<usize> = (0..records.len()).filter(|&i| tiers[i] == tier).collect();
        if idxs.is_empty() {
            continue;
        }
        let n = idxs.len() as f64;
        let mut scores: Vec<i32> = idxs.iter().map(|&i| records[i].lsat).collect();
        scores.sort_unstable();
        for &i in &idxs {
            let lsat = records[i].lsat;
            let lower = scores.partition_point(|&s| s < lsat);
            let upper = scores.partition_point(|&s| s <= lsat);
            let ties = upper - lower;
            out[i] = (lower as f64 + 0.5 * ties as f64) / n;
        }
    }
    out
}

/// Predictor row in the §-free export order (intercept added by the fit).
pub fn outcome_design(r: &StudentRecord, lsat_perc: f64, group: SesGroup) -> Vec<f64> {
    let black = (r.race == Race::Black) as u8 as f64;
    let low = (group == SesGroup::LowSes) as u8 as f64;
    vec![
        r.female as u8 as f64,
        r.lsat as f64,
        lsat_perc,
        r.ugpa,
        black,
        low,
        lsat_perc * black,
        lsat_perc * low,
    ]
}

fn stage_membership(stage: Stage, outcome: OutcomeClass) -> Option<bool> {
    // Some(y) when the student is in the stage's conditioning set.
    match stage {
        Stage::Dropout => Some(outcome == OutcomeClass::Dropout),
        Stage::SkipBar => (outcome != OutcomeClass::Dropout).then(|| outcome == OutcomeClass::GraduatedNoBar),
        Stage::PassFirst => matches!(
            outcome,
            OutcomeClass::PassedFirstTry | OutcomeClass::PassedLaterTry | OutcomeClass::FailedBar
        )
        .then(|| outcome == OutcomeClass::PassedFirstTry),
        Stage::PassLater => matches!(outcome, OutcomeClass::PassedLaterTry | OutcomeClass::FailedBar)
            .then(|| outcome == OutcomeClass::PassedLaterTry),
    }
}

/// Fits the 20 stage-by-tier models on the observed tiers and outcomes.
pub fn fit_outcome_models(
    records: &[StudentRecord],
    groups: &[SesGroup],
    prior: &PriorConfig,
) -> Result<OutcomeModelSet> {
    let observed_tiers: Vec<u8> = records.iter().map(|r| r.tier).collect();
    let percs = recompute_lsat_percentiles(&observed_tiers, records);
    let spec = prior.spec(&COEF_NAMES[1..].iter().copied().collect::<Vec<_>>());

    let mut models: Vec<Vec<LogitModel>> = Vec::with_capacity(4);
    let mut warnings = Vec::new();
    for stage in Stage::ALL {
        let mut per_tier = Vec::with_capacity(5);
        for tier in 1..=5u8 {
            let mut x = Vec::new();
            let mut y = Vec::new();
            for (i, r) in records.iter().enumerate() {
                if r.tier != tier {
                    continue;
                }
                if let Some(yi) = stage_membership(stage, r.outcome) {
                    x.push(outcome_design(r, percs[i], groups[i]));
                    y.push(yi);
                }
            }
            if x.is_empty() {
                return Err(Error::Fit(format!(
                    "empty conditioning set: stage {} tier {tier}",
                    stage.label()
                )));
            }
            let model = logit::fit(&spec, &x, &y)?;
            if !model.converged {
                warnings.push(format!(
                    "outcome fit for stage {} tier {tier} hit the iteration cap",
                    stage.label()
                ));
            }
            per_tier.push(model);
        }
        models.push(per_tier);
    }
    Ok(OutcomeModelSet { models, warnings })
}

/// Unconditional class probabilities implied by the four stage
/// probabilities (dropout, skip-bar, pass-first, pass-later).
pub fn class_probabilities(stage_probs: [f64; 4]) -> [f64; 5] {
    let [d, s, f, l] = stage_probs;
    [
        d,
        (1.0 - d) * s,
        (1.0 - d) * (1.0 - s) * f,
        (1.0 - d) * (1.0 - s) * (1.0 - f) * l,
        (1.0 - d) * (1.0 - s) * (1.0 - f) * (1.0 - l),
    ]
}

/// One posterior draw per (stage, tier), in stage-major order.
pub fn draw_outcome_params<R: Rng>(set: &OutcomeModelSet, rng: &mut R) -> Result<Vec<Vec<DVector<f64>>>> {
    let mut draws = Vec::with_capacity(4);
    for stage in Stage::ALL {
        let mut per_tier = Vec::with_capacity(5);
        for tier in 1..=5u8 {
            per_tier.push(logit::draw_posterior(set.model(stage, tier), rng)?);
        }
        draws.push(per_tier);
    }
    Ok(draws)
}

/// Sequentially imputes every student's outcome class under the given
/// tier assignment, with percentiles recomputed for those tiers.
pub fn impute_outcomes<R: Rng>(
    set: &OutcomeModelSet,
    assigned_tiers: &[u8],
    records: &[StudentRecord],
    groups: &[SesGroup],
    rng: &mut R,
) -> Result<Vec<OutcomeClass>> {
    let percs = recompute_lsat_percentiles(assigned_tiers, records);
    let draws = draw_outcome_params(set, rng)?;

    let mut out = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        let tier_slot = (assigned_tiers[i] - 1) as usize;
        let x = outcome_design(r, percs[i], groups[i]);
        let stage_prob =
            |stage: Stage| logit::predict_prob(draws[stage.index()][tier_slot].as_slice(), &x);

        let class = if rng.gen_bool(stage_prob(Stage::Dropout).clamp(0.0, 1.0)) {
            OutcomeClass::Dropout
        } else if rng.gen_bool(stage_prob(Stage::SkipBar).clamp(0.0, 1.0)) {
            OutcomeClass::GraduatedNoBar
        } else if rng.gen_bool(stage_prob(Stage::PassFirst).clamp(0.0, 1.0)) {
            OutcomeClass::PassedFirstTry
        } else if rng.gen_bool(stage_prob(Stage::PassLater).clamp(0.0, 1.0)) {
            OutcomeClass::PassedLaterTry
        } else {
            OutcomeClass::FailedBar
        };
        out.push(class);
    }
    Ok(out)
}
