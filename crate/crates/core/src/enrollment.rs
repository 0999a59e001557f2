//! Conditional tier-enrollment cascades and the race-screening
//! diagnostic regressions.
//!
//! The cascade fits, per group, a top-down sequence of logistic
//! regressions: tier 1 vs tiers 2-5 on everyone, then tier 2 vs 3-5 on
//! the remainder, and so on through tier 4. The conditional probability
//! for tier 5 is identically 1.

use nalgebra::DVector;

use crate::dataset::{Race, StudentRecord};
use crate::error::{Error, Result};
use crate::logit::{self, LogitModel, PriorConfig};
use crate::ses::SesGroup;

/// Which two-way split the cascade is conditioned on. Group index 0 is
/// the AA-targeted side (black / low SES), index 1 the other.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Grouping {
    Race,
    Ses,
}

pub const GROUP_LABELS: [[&str; 2]; 2] = [["black", "white"], ["low_ses", "high_ses"]];

impl Grouping {
    pub fn labels(self) -> [&'static str; 2] {
        match self {
            Grouping::Race => GROUP_LABELS[0],
            Grouping::Ses => GROUP_LABELS[1],
        }
    }
}

/// The 2 groups x 4 tiers fitted enrollment models (tier 5 needs none).
#[derive(Debug, Clone)]
pub struct EnrollmentCascade {
    pub grouping: Grouping,
    /// `models[group][tier-1]` for tiers 1-4.
    pub models: Vec<Vec<LogitModel>>,
    /// Non-fatal fit notes (e.g. iteration cap reached on a small cell).
    pub warnings: Vec<String>,
}

impl EnrollmentCascade {
    pub fn model(&self, group: usize, tier: u8) -> &LogitModel {
        &self.models[group][(tier - 1) as usize]
    }
}

pub fn race_group(r: &StudentRecord) -> usize {
    match r.race {
        Race::Black => 0,
        _ => 1,
    }
}

pub fn ses_group_index(g: SesGroup) -> usize {
    match g {
        SesGroup::LowSes => 0,
        SesGroup::HighSes => 1,
    }
}

fn enrollment_design(r: &StudentRecord) -> Vec<f64> {
    vec![r.lsat as f64, r.ugpa]
}

/// Fits the cascade over the two groups given by `group_of` (0 or 1).
pub fn fit_enrollment_cascade_grouped<F>(
    records: &[StudentRecord],
    grouping: Grouping,
    prior: &PriorConfig,
    group_of: F,
) -> Result<EnrollmentCascade>
where
    F: Fn(usize, &StudentRecord) -> usize,
{
    let labels = grouping.labels();
    let spec = prior.spec(&["LSAT", "UGPA"]);
    let mut models: Vec<Vec<LogitModel>> = vec![Vec::new(), Vec::new()];
    let mut warnings = Vec::new();

    for group in 0..2 {
        // Cascade removal: the tier-t fit uses exactly the group's
        // students with tier >= t.
        for tier in 1..=4u8 {
            let mut x = Vec::new();
            let mut y = Vec::new();
            let mut positives = 0usize;
            for (i, r) in records.iter().enumerate() {
                if group_of(i, r) != group || r.tier < tier {
                    continue;
                }
                x.push(enrollment_design(r));
                let hit = r.tier == tier;
                positives += hit as usize;
                y.push(hit);
            }
            if x.is_empty() || positives == 0 {
                return Err(Error::Fit(format!(
                    "empty enrollment cell: group {} tier {tier}",
                    labels[group]
                )));
            }
            let model = logit::fit(&spec, &x, &y)?;
            if !model.converged {
                warnings.push(format!(
                    "enrollment fit for group {} tier {tier} hit the iteration cap",
                    labels[group]
                ));
            }
            models[group].push(model);
        }
    }

    Ok(EnrollmentCascade {
        grouping,
        models,
        warnings,
    })
}

/// Race-grouped cascade (black = group 0, white = group 1).
pub fn fit_enrollment_cascade(records: &[StudentRecord], prior: &PriorConfig) -> Result<EnrollmentCascade> {
    fit_enrollment_cascade_grouped(records, Grouping::Race, prior, |_, r| race_group(r))
}

/// SES-grouped cascade, for the fit diagnostics by SES group.
pub fn fit_enrollment_cascade_ses(
    records: &[StudentRecord],
    groups: &[SesGroup],
    prior: &PriorConfig,
) -> Result<EnrollmentCascade> {
    fit_enrollment_cascade_grouped(records, Grouping::Ses, prior, |i, _| ses_group_index(groups[i]))
}

/// Conditional tier probabilities (p1..p4 from the models, p5 = 1) for
/// one student, at the point estimates or at supplied posterior draws.
pub fn conditional_probs(
    cascade: &EnrollmentCascade,
    group: usize,
    lsat: f64,
    ugpa: f64,
    draws: Option<&[DVector<f64>; 4]>,
) -> [f64; 5] {
    let x = [lsat, ugpa];
    let mut p = [1.0; 5];
    for t in 0..4 {
        p[t] = match draws {
            Some(d) => logit::predict_prob(d[t].as_slice(), &x),
            None => cascade.models[group][t].prob(&x),
        };
    }
    p
}

/// Unconditional tier probabilities implied by the cascade:
/// q_t = p_t * prod_{s<t} (1 - p_s), with q5 absorbing the remainder.
pub fn unconditional_from_conditional(p: &[f64; 5]) -> [f64; 5] {
    let mut q = [0.0; 5];
    let mut survive = 1.0;
    for t in 0..4 {
        q[t] = p[t] * survive;
        survive *= 1.0 - p[t];
    }
    q[4] = survive;
    q
}

/// One tier's screening regression: membership on LSAT plus race
/// dummies with white as the reference level.
#[derive(Debug, Clone)]
pub struct TierScreen {
    pub tier: u8,
    /// (term name, estimate, posterior sd) with intercept first.
    pub terms: Vec<(String, f64, f64)>,
}

/// Fits the per-tier unconditional membership diagnostics over all
/// races (tiers 1-5 only). Race levels absent from the data are
/// omitted from the dummy set, with a warning.
pub fn screen_race_effects(
    records: &[StudentRecord],
    prior: &PriorConfig,
) -> Result<(Vec<TierScreen>, Vec<String>)> {
    let pool: Vec<&StudentRecord> = records.iter().filter(|r| r.tier <= 5).collect();
    if pool.is_empty() {
        return Err(Error::Data("no tier 1-5 records to screen".into()));
    }
    let dummy_races = [Race::Asian, Race::Black, Race::Hispanic, Race::Other];
    let mut warnings = Vec::new();
    let present: Vec<Race> = dummy_races
        .iter()
        .copied()
        .filter(|race| {
            let has = pool.iter().any(|r| r.race == *race);
            if !has {
                warnings.push(format!("race level {} absent; dummy omitted", race.token()));
            }
            has
        })
        .collect();

    let mut names: Vec<String> = vec!["LSAT".to_string()];
    names.extend(present.iter().map(|r| {
        let mut s = r.token().to_string();
        s[..1].make_ascii_uppercase();
        s
    }));
    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let spec = prior.spec(&name_refs);

    let x: Vec<Vec<f64>> = pool
        .iter()
        .map(|r| {
            let mut row = vec![r.lsat as f64];
            row.extend(present.iter().map(|race| (r.race == *race) as u8 as f64));
            row
        })
        .collect();

    let mut screens = Vec::new();
    for tier in 1..=5u8 {
        let y: Vec<bool> = pool.iter().map(|r| r.tier == tier).collect();
        let model = logit::fit(&spec, &x, &y)?;
        let sd = model.sd();
        let mut terms = vec![("Intercept".to_string(), model.beta[0], sd[0])];
        for (j, name) in names.iter().enumerate() {
            terms.push((name.clone(), model.beta[j + 1], sd[j + 1]));
        }
        screens.push(TierScreen { tier, terms });
    }
    Ok((screens, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{OutcomeClass, SesProfile, SesValue};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn student(id: usize, lsat: i32, ugpa: f64, race: Race, tier: u8) -> StudentRecord {
        StudentRecord {
            id: format!("s{id:05}"),
            lsat,
            ugpa,
            female: id % 2 == 0,
            race,
            ses: SesProfile {
                occ_mom: SesValue::Value(3),
                occ_dad: SesValue::Value(3),
                ed_mom: SesValue::Value(3),
                ed_dad: SesValue::Value(3),
                fam_inc: SesValue::Value(3),
            },
            tier,
            outcome: OutcomeClass::PassedFirstTry,
        }
    }

    /// Both races, every tier occupied, LSAT increasing with tier rank.
    fn layered_population(n_per_cell: usize, seed: u64) -> Vec<StudentRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        let mut id = 0;
        for tier in 1..=5u8 {
            let base = 45 - 5 * tier as i32;
            for race in [Race::Black, Race::White] {
                for _ in 0..n_per_cell {
                    let lsat = (base + rng.gen_range(-4..=4)).clamp(11, 48);
                    out.push(student(id, lsat, rng.gen_range(2.0..4.0), race, tier));
                    id += 1;
                }
            }
        }
        out
    }

    #[test]
    fn separable_tier1_cell_gets_sharp_probabilities() {
        let mut records = Vec::new();
        for i in 0..40 {
            records.push(student(i, 44 + (i % 4) as i32, 3.5, Race::White, 1));
        }
        for i in 40..200 {
            records.push(student(i, 20 + (i % 9) as i32, 3.0, Race::White, 2 + (i % 4) as u8));
        }
        // group 0 (black) needs occupied cells too
        for i in 200..240 {
            records.push(student(i, 44, 3.5, Race::Black, 1));
        }
        for i in 240..400 {
            records.push(student(i, 22 + (i % 7) as i32, 3.0, Race::Black, 2 + (i % 4) as u8));
        }
        let cascade = fit_enrollment_cascade(&records, &PriorConfig::default()).unwrap();
        let above = conditional_probs(&cascade, 1, 44.0, 3.5, None)[0];
        let below = conditional_probs(&cascade, 1, 27.0, 3.0, None)[0];
        assert!(above > 0.9, "p1 above threshold {above}");
        assert!(below < 0.1, "p1 below threshold {below}");
    }

    #[test]
    fn tier5_conditional_probability_is_one() {
        let records = layered_population(30, 1);
        let cascade = fit_enrollment_cascade(&records, &PriorConfig::default()).unwrap();
        let p = conditional_probs(&cascade, 0, 30.0, 3.0, None);
        assert_eq!(p[4], 1.0);
    }

    #[test]
    fn all_zero_draw_gives_half_probabilities() {
        let records = layered_population(20, 2);
        let cascade = fit_enrollment_cascade(&records, &PriorConfig::default()).unwrap();
        let zeros: [DVector<f64>; 4] = std::array::from_fn(|_| DVector::zeros(3));
        let p = conditional_probs(&cascade, 0, 40.0, 3.5, Some(&zeros));
        assert_eq!(p, [0.5, 0.5, 0.5, 0.5, 1.0]);
    }

    #[test]
    fn unconditional_probabilities_sum_to_one() {
        let records = layered_population(25, 3);
        let cascade = fit_enrollment_cascade(&records, &PriorConfig::default()).unwrap();
        for lsat in [15.0, 25.0, 35.0, 45.0] {
            for group in 0..2 {
                let p = conditional_probs(&cascade, group, lsat, 3.0, None);
                let q = unconditional_from_conditional(&p);
                let sum: f64 = q.iter().sum();
                assert!((sum - 1.0).abs() <= 1e-12, "sum {sum}");
            }
        }
    }

    #[test]
    fn cascade_removal_uses_exact_tail_counts() {
        let records = layered_population(10, 4);
        let cascade = fit_enrollment_cascade(&records, &PriorConfig::default()).unwrap();
        for group in 0..2 {
            let race = if group == 0 { Race::Black } else { Race::White };
            for tier in 1..=4u8 {
                let expected = records.iter().filter(|r| r.race == race && r.tier >= tier).count();
                assert_eq!(cascade.model(group, tier).n_obs, expected);
            }
        }
    }

    #[test]
    fn refit_is_bit_reproducible() {
        let records = layered_population(15, 5);
        let a = fit_enrollment_cascade(&records, &PriorConfig::default()).unwrap();
        let b = fit_enrollment_cascade(&records, &PriorConfig::default()).unwrap();
        for g in 0..2 {
            for t in 0..4 {
                assert_eq!(a.models[g][t].beta, b.models[g][t].beta);
                assert_eq!(a.models[g][t].cov, b.models[g][t].cov);
            }
        }
    }

    #[test]
    fn empty_cell_errors_with_group_and_tier() {
        // No black tier-1 students at all.
        let mut records = layered_population(10, 6);
        records.retain(|r| !(r.race == Race::Black && r.tier == 1));
        let err = fit_enrollment_cascade(&records, &PriorConfig::default()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("black") && msg.contains("tier 1"), "{msg}");
    }

    #[test]
    fn raising_lsat_raises_each_conditional_probability() {
        let records = layered_population(30, 7);
        let cascade = fit_enrollment_cascade(&records, &PriorConfig::default()).unwrap();
        for t in 1..=4u8 {
            let m = cascade.model(1, t);
            if m.beta[1] > 0.0 {
                let lo = m.prob(&[30.0, 3.0]);
                let hi = m.prob(&[35.0, 3.0]);
                assert!(hi > lo);
            }
        }
    }

    #[test]
    fn screening_detects_black_tier1_boost() {
        // Black students enter tier 1 at much lower LSATs.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut records = Vec::new();
        for i in 0..4000 {
            let race = match i % 8 {
                0 => Race::Black,
                1 => Race::Hispanic,
                2 => Race::Asian,
                3 => Race::Other,
                _ => Race::White,
            };
            let lsat = rng.gen_range(15..=48);
            let boost = if race == Race::Black { 8 } else { 0 };
            let tier = match lsat + boost {
                v if v >= 44 => 1,
                v if v >= 38 => 2,
                v if v >= 31 => 3,
                v if v >= 24 => 4,
                _ => 5,
            };
            records.push(student(i, lsat, 3.0, race, tier));
        }
        let (screens, warnings) = screen_race_effects(&records, &PriorConfig::default()).unwrap();
        assert!(warnings.is_empty());
        let black_of = |tier: usize| {
            screens[tier - 1]
                .terms
                .iter()
                .find(|(n, _, _)| n == "Black")
                .map(|(_, b, _)| *b)
                .unwrap()
        };
        assert!(black_of(1) > 0.0, "tier 1 black coefficient {}", black_of(1));
        assert!(black_of(5) < 0.0, "tier 5 black coefficient {}", black_of(5));
    }

    #[test]
    fn race_blind_data_has_null_race_effects() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut records = Vec::new();
        for i in 0..6000 {
            let race = match i % 6 {
                0 => Race::Black,
                1 => Race::Hispanic,
                2 => Race::Asian,
                3 => Race::Other,
                _ => Race::White,
            };
            let lsat = rng.gen_range(15..=48);
            let tier = match lsat {
                v if v >= 44 => 1,
                v if v >= 38 => 2,
                v if v >= 31 => 3,
                v if v >= 24 => 4,
                _ => 5,
            };
            records.push(student(i, lsat, 3.0, race, tier));
        }
        let (screens, _) = screen_race_effects(&records, &PriorConfig::default()).unwrap();
        for s in &screens {
            for (name, est, sd) in &s.terms {
                if name != "Intercept" && name != "LSAT" {
                    assert!(est.abs() < 3.0 * sd, "tier {} {name}: {est} (sd {sd})", s.tier);
                }
            }
        }
    }

    #[test]
    fn single_race_input_drops_all_dummies() {
        let records = layered_population(10, 10)
            .into_iter()
            .filter(|r| r.race == Race::White)
            .collect::<Vec<_>>();
        let (screens, warnings) = screen_race_effects(&records, &PriorConfig::default()).unwrap();
        assert_eq!(warnings.len(), 4);
        assert_eq!(screens[0].terms.len(), 2); // intercept + LSAT only
    }
}
