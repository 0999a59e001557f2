//! Calibrated synthetic population generator.
//!
//! Produces a BPS-shaped student file whose marginals match the
//! published ones: group sizes, per-group Tier-5 LSAT quartiles, the
//! low-SES/black overlap, and the share of SES variance carried by the
//! first principal component. Observed tiers come from simulating the
//! published enrollment cascade and observed outcomes from the
//! published stage models, so recovery tests have known ground truth.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dataset::{nearest_rank, OutcomeClass, Race, SesProfile, SesValue, StudentRecord};
use crate::error::{Error, Result};
use crate::logit;
use crate::outcomes::{self, outcome_design};
use crate::ses::{self, SesGroup};

/// Ground-truth enrollment coefficients `[group][tier-1] = [intercept,
/// LSAT, UGPA]`; group 0 is black, group 1 white.
pub const ENROLLMENT_COEFS: [[[f64; 3]; 4]; 2] = [
    [
        [-12.95, 0.20, 1.47],
        [-7.51, 0.12, 0.91],
        [-3.11, 0.09, 0.20],
        [-4.12, 0.14, 0.71],
    ],
    [
        [-16.46, 0.22, 1.57],
        [-8.17, 0.12, 0.73],
        [-10.57, 0.15, 1.44],
        [-4.72, 0.14, 0.48],
    ],
];

/// Ground-truth outcome coefficients `[stage][tier-1]`, rows ordered
/// (intercept, female, LSAT, LSAT percentile, UGPA, black, low SES,
/// percentile x black, percentile x low SES). Stages follow
/// `outcomes::Stage::ALL`.
pub const OUTCOME_COEFS: [[[f64; 9]; 5]; 4] = [
    // Dropout
    [
        [5.06, -0.62, -0.19, 1.74, -0.22, -1.56, 0.64, 4.79, -4.91],
        [0.77, -0.14, -0.08, -0.08, -0.16, 0.21, 0.34, 0.32, 0.16],
        [0.91, -0.06, -0.09, 0.37, -0.01, 0.31, 0.41, -0.96, 0.26],
        [-1.09, -0.07, -0.03, -0.43, 0.08, 0.71, 0.15, -0.79, 1.09],
        [1.44, -0.25, -0.09, 0.18, -0.15, 0.71, 0.64, -1.15, 0.49],
    ],
    // Graduated without attempting the bar
    [
        [-2.98, -0.17, -0.12, 2.61, 1.13, 0.54, 1.91, -0.05, -19.35],
        [-0.56, -0.06, -0.04, 0.80, -0.18, 0.44, 0.27, -3.36, -0.67],
        [2.26, 0.08, -0.16, 2.41, -0.02, -0.22, -0.42, 0.78, 0.79],
        [-3.09, 0.07, 0.01, -0.18, -0.01, 0.50, 0.40, 0.16, 0.05],
        [-3.45, 0.04, 0.01, 0.23, 0.25, 1.25, -1.11, -4.34, 2.36],
    ],
    // Passed on the first try
    [
        [-7.79, 0.07, 0.19, -0.43, 0.94, 0.06, 0.84, -1.72, -2.34],
        [-7.16, -0.22, 0.18, -0.59, 0.99, -0.36, -0.76, -0.83, 0.29],
        [-7.61, -0.08, 0.19, -0.57, 1.04, -0.12, -0.44, -0.68, 0.34],
        [-6.51, -0.12, 0.17, -0.47, 0.96, -0.69, -0.09, -0.13, -0.01],
        [-7.71, -0.48, 0.25, -2.09, 0.76, -0.33, 0.59, -0.94, -0.74],
    ],
    // Passed on a later try
    [
        [-4.61, 0.27, 0.12, -1.04, 0.37, 0.26, -0.38, -0.17, -2.95],
        [-4.92, 0.27, 0.14, -1.94, 0.30, -0.21, -0.64, 0.30, 2.56],
        [-2.52, 0.10, 0.04, -0.31, 0.52, 0.30, -0.25, -3.49, 0.74],
        [-3.37, -0.15, 0.11, -1.78, 0.27, -0.47, -0.31, 1.32, 0.83],
        [-4.41, -0.11, 0.15, -1.14, 0.19, 0.31, 0.21, -6.78, -1.07],
    ],
];

#[derive(Debug, Clone, Copy)]
pub struct AbilityMarginal {
    pub lsat_mean: f64,
    pub lsat_sd: f64,
    pub ugpa_mean: f64,
    pub ugpa_sd: f64,
}

#[derive(Debug, Clone)]
pub struct GeneratorConfig {
    pub n: usize,
    pub n_black: usize,
    pub seed: u64,
    pub black: AbilityMarginal,
    pub white: AbilityMarginal,
    /// Latent-normal copula correlation between LSAT and UGPA.
    pub lsat_ugpa_corr: f64,
    /// Loading of the shared family factor in each SES component.
    pub ses_factor_loading: f64,
    /// Downward shift of the black family-factor mean.
    pub ses_black_shift: f64,
    pub female_rate: f64,
    /// Per-component missingness rate in the emitted SES profile.
    pub ses_missing_rate: f64,
    /// Rate at which occ_mom is recorded as homemaker.
    pub homemaker_rate: f64,
    /// Calibration targets (median flanked by quartiles).
    pub black_tier5_quartiles: (i32, i32, i32),
    pub white_tier5_quartiles: (i32, i32, i32),
    pub quartile_tolerance: i32,
    pub black_tier1_target: f64,
    pub black_tier1_tolerance: f64,
    pub low_ses_black_overlap_target: f64,
    pub low_ses_black_overlap_tolerance: f64,
    pub low_ses_tier1_target: f64,
    pub low_ses_tier1_tolerance: f64,
    pub pc_variance_target: f64,
    pub pc_variance_tolerance: f64,
    /// Also emit small Hispanic/Asian/Other and Tier-6 blocks so the
    /// ingest filters have something to do. Off by default; the
    /// calibration targets apply to the black/white core.
    pub include_filtered_records: bool,
}

impl Default for GeneratorConfig {
    fn default() -> GeneratorConfig {
        GeneratorConfig {
            n: 27_000,
            n_black: 1_510,
            seed: 20_260_823,
            black: AbilityMarginal {
                lsat_mean: 28.5,
                lsat_sd: 5.1,
                ugpa_mean: 3.00,
                ugpa_sd: 0.45,
            },
            white: AbilityMarginal {
                lsat_mean: 36.6,
                lsat_sd: 4.6,
                ugpa_mean: 3.25,
                ugpa_sd: 0.40,
            },
            lsat_ugpa_corr: 0.3,
            ses_factor_loading: 0.72,
            ses_black_shift: 0.80,
            female_rate: 0.44,
            ses_missing_rate: 0.03,
            homemaker_rate: 0.08,
            black_tier5_quartiles: (21, 24, 27),
            white_tier5_quartiles: (30, 33, 35),
            quartile_tolerance: 1,
            black_tier1_target: 147.0,
            black_tier1_tolerance: 60.0,
            low_ses_black_overlap_target: 251.0,
            low_ses_black_overlap_tolerance: 80.0,
            low_ses_tier1_target: 87.0,
            low_ses_tier1_tolerance: 45.0,
            pc_variance_target: 0.60,
            pc_variance_tolerance: 0.05,
            include_filtered_records: false,
        }
    }
}

impl GeneratorConfig {
    /// Default config rescaled to a different population size: count
    /// targets shrink with the black group, with tolerance floors so
    /// small populations aren't judged by large-sample noise bands.
    pub fn sized(n: usize, n_black: usize, seed: u64) -> GeneratorConfig {
        let base = GeneratorConfig::default();
        let ratio = n_black as f64 / base.n_black as f64;
        GeneratorConfig {
            n,
            n_black,
            seed,
            black_tier1_target: base.black_tier1_target * ratio,
            black_tier1_tolerance: (base.black_tier1_tolerance * ratio).max(20.0),
            low_ses_black_overlap_target: base.low_ses_black_overlap_target * ratio,
            low_ses_black_overlap_tolerance: (base.low_ses_black_overlap_tolerance * ratio).max(25.0),
            low_ses_tier1_target: base.low_ses_tier1_target * ratio,
            low_ses_tier1_tolerance: (base.low_ses_tier1_tolerance * ratio).max(20.0),
            // Tier-5 cells hold only a fraction of the black group, so
            // nearest-rank quartiles are very noisy at small sizes.
            quartile_tolerance: if n_black < 300 {
                6
            } else if n_black < 1000 {
                3
            } else {
                base.quartile_tolerance
            },
            ..base
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_black > self.n {
            return Err(Error::Config(format!(
                "black count {} exceeds population size {}",
                self.n_black, self.n
            )));
        }
        for (label, q) in [
            ("black", self.black_tier5_quartiles),
            ("white", self.white_tier5_quartiles),
        ] {
            if !(q.0 <= q.1 && q.1 <= q.2) {
                return Err(Error::Config(format!(
                    "{label} Tier-5 quartile targets {q:?} are not monotone"
                )));
            }
        }
        for (label, rate) in [
            ("copula correlation", self.lsat_ugpa_corr.abs()),
            ("factor loading", self.ses_factor_loading),
            ("female rate", self.female_rate),
            ("missing rate", self.ses_missing_rate),
            ("homemaker rate", self.homemaker_rate),
        ] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::Config(format!("{label} {rate} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TargetCheck {
    pub name: String,
    pub target: f64,
    pub achieved: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct GeneratorManifest {
    pub checks: Vec<TargetCheck>,
}

impl GeneratorManifest {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    /// Delimited text form: name, target, achieved, tolerance, pass.
    pub fn to_delimited(&self) -> String {
        let mut out = String::from("target\texpected\tachieved\ttolerance\tpass\n");
        for c in &self.checks {
            out.push_str(&format!(
                "{}\t{:.6}\t{:.6}\t{:.6}\t{}\n",
                c.name, c.target, c.achieved, c.tolerance, c.pass
            ));
        }
        out
    }
}

/// Standard-normal quintile cutoffs used to discretize the latent SES
/// components onto the 1-5 questionnaire scale.
const QUINTILE_CUTS: [f64; 4] = [-0.841_621_233_572_914_3, -0.253_347_103_135_800_13, 0.253_347_103_135_800_13, 0.841_621_233_572_914_3];

fn discretize(z: f64) -> u8 {
    let mut level = 1u8;
    for &cut in &QUINTILE_CUTS {
        if z > cut {
            level += 1;
        }
    }
    level
}

fn std_normal<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

fn simulate_tier<R: Rng>(group: usize, lsat: f64, ugpa: f64, rng: &mut R) -> u8 {
    for t in 0..4 {
        let c = ENROLLMENT_COEFS[group][t];
        let p = logit::predict_prob(&[c[0], c[1], c[2]], &[lsat, ugpa]);
        if rng.gen_bool(p.clamp(0.0, 1.0)) {
            return (t + 1) as u8;
        }
    }
    5
}

fn simulate_outcome<R: Rng>(x: &[f64], tier: u8, rng: &mut R) -> OutcomeClass {
    let slot = (tier - 1) as usize;
    let p = |stage: usize| logit::predict_prob(&OUTCOME_COEFS[stage][slot], x).clamp(0.0, 1.0);
    if rng.gen_bool(p(0)) {
        OutcomeClass::Dropout
    } else if rng.gen_bool(p(1)) {
        OutcomeClass::GraduatedNoBar
    } else if rng.gen_bool(p(2)) {
        OutcomeClass::PassedFirstTry
    } else if rng.gen_bool(p(3)) {
        OutcomeClass::PassedLaterTry
    } else {
        OutcomeClass::FailedBar
    }
}

fn ses_profile<R: Rng>(cfg: &GeneratorConfig, race: Race, rng: &mut R) -> SesProfile {
    let lambda = cfg.ses_factor_loading;
    let noise = (1.0 - lambda * lambda).sqrt();
    let factor_mean = if race == Race::Black { -cfg.ses_black_shift } else { 0.0 };
    let f = factor_mean + std_normal(rng);
    let mut levels = [0u8; 5];
    for level in &mut levels {
        *level = discretize(lambda * f + noise * std_normal(rng));
    }
    let mut cells = levels.map(SesValue::Value);
    if rng.gen_bool(cfg.homemaker_rate) {
        cells[0] = SesValue::Homemaker;
    }
    // Component-wise missingness; keep fam_inc whenever everything else
    // is gone so the record stays analyzable.
    for (j, cell) in cells.iter_mut().enumerate() {
        if j < 4 && rng.gen_bool(cfg.ses_missing_rate) {
            *cell = SesValue::Missing;
        }
    }
    if !cells[..4].iter().all(|c| *c == SesValue::Missing) && rng.gen_bool(cfg.ses_missing_rate) {
        cells[4] = SesValue::Missing;
    }
    SesProfile {
        occ_mom: cells[0],
        occ_dad: cells[1],
        ed_mom: cells[2],
        ed_dad: cells[3],
        fam_inc: cells[4],
    }
}

fn ability<R: Rng>(m: &AbilityMarginal, corr: f64, rng: &mut R) -> (i32, f64) {
    let z1 = std_normal(rng);
    let z2 = corr * z1 + (1.0 - corr * corr).sqrt() * std_normal(rng);
    let lsat = (m.lsat_mean + m.lsat_sd * z1).round().clamp(11.0, 48.0) as i32;
    let ugpa = ((m.ugpa_mean + m.ugpa_sd * z2).clamp(1.0, 4.0) * 100.0).round() / 100.0;
    (lsat, ugpa)
}

/// Generates the full synthetic file and its calibration manifest.
pub fn generate_population(cfg: &GeneratorConfig) -> Result<(Vec<StudentRecord>, GeneratorManifest)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut records = Vec::with_capacity(cfg.n);
    for i in 0..cfg.n {
        let race = if i < cfg.n_black { Race::Black } else { Race::White };
        let marginal = if race == Race::Black { &cfg.black } else { &cfg.white };
        let (lsat, ugpa) = ability(marginal, cfg.lsat_ugpa_corr, &mut rng);
        let group = (race != Race::Black) as usize;
        let tier = simulate_tier(group, lsat as f64, ugpa, &mut rng);
        records.push(StudentRecord {
            id: format!("s{i:05}"),
            lsat,
            ugpa,
            female: rng.gen_bool(cfg.female_rate),
            race,
            ses: ses_profile(cfg, race, &mut rng),
            tier,
            outcome: OutcomeClass::FailedBar, // filled in below
        });
    }

    // Low-SES labels via the same scoring path the pipeline uses, so
    // the outcome ground truth and later refits agree on who is low SES.
    let groups = score_low_ses(&records)?;

    let observed_tiers: Vec<u8> = records.iter().map(|r| r.tier).collect();
    let percs = outcomes::recompute_lsat_percentiles(&observed_tiers, &records);
    for i in 0..records.len() {
        let x = outcome_design(&records[i], percs[i], groups[i]);
        records[i].outcome = simulate_outcome(&x, records[i].tier, &mut rng);
    }

    if cfg.include_filtered_records {
        append_filtered_block(cfg, &mut records, &mut rng);
    }

    let manifest = calibration_report(&records, cfg)?;
    Ok((records, manifest))
}

/// Small out-of-population blocks: other races (ordered LSAT means
/// between the black and white marginals) and a few Tier-6 rows.
fn append_filtered_block<R: Rng>(cfg: &GeneratorConfig, records: &mut Vec<StudentRecord>, rng: &mut R) {
    let blocks = [
        (Race::Hispanic, 30.0, 200, 3u8),
        (Race::Asian, 35.0, 200, 3u8),
        (Race::Other, 32.0, 100, 3u8),
        (Race::Black, 26.0, 50, 6u8),
    ];
    let mut i = records.len();
    for (race, lsat_mean, count, tier) in blocks {
        let marginal = AbilityMarginal {
            lsat_mean,
            lsat_sd: 4.8,
            ugpa_mean: 3.0,
            ugpa_sd: 0.45,
        };
        for _ in 0..count {
            let (lsat, ugpa) = ability(&marginal, cfg.lsat_ugpa_corr, rng);
            records.push(StudentRecord {
                id: format!("s{i:05}"),
                lsat,
                ugpa,
                female: rng.gen_bool(cfg.female_rate),
                race,
                ses: ses_profile(cfg, race, rng),
                tier,
                outcome: OutcomeClass::PassedFirstTry,
            });
            i += 1;
        }
    }
}

/// SES scores and low/high split for the black/white core, computed
/// with the production scoring path.
fn score_low_ses(records: &[StudentRecord]) -> Result<Vec<SesGroup>> {
    let imputer = ses::SesImputer::fit(records)?;
    let completed = imputer.complete_all(records)?;
    let model = ses::fit_ses_score_model(&completed)?;
    let scores: Vec<f64> = completed.iter().map(|c| ses::compute_ses_score(&model, c)).collect();
    Ok(ses::assign_ses_groups(records, &scores))
}

fn quartiles(records: &[StudentRecord], tier: u8, race: Race) -> Option<(i32, i32, i32)> {
    let mut scores: Vec<i32> = records
        .iter()
        .filter(|r| r.tier == tier && r.race == race)
        .map(|r| r.lsat)
        .collect();
    if scores.is_empty() {
        return None;
    }
    scores.sort_unstable();
    Some((
        nearest_rank(&scores, 0.25),
        nearest_rank(&scores, 0.50),
        nearest_rank(&scores, 0.75),
    ))
}

/// Recomputes every target statistic against the supplied population.
pub fn calibration_report(records: &[StudentRecord], cfg: &GeneratorConfig) -> Result<GeneratorManifest> {
    cfg.validate()?;
    // Targets are defined on the analysis core; ignore any filtered-
    // block rows (other races, Tier 6).
    let core: Vec<StudentRecord> = records
        .iter()
        .filter(|r| r.tier != 6 && matches!(r.race, Race::Black | Race::White))
        .cloned()
        .collect();

    let mut checks = Vec::new();
    let mut exact = |name: &str, target: f64, achieved: f64| {
        checks.push(TargetCheck {
            name: name.into(),
            target,
            achieved,
            tolerance: 0.0,
            pass: achieved == target,
        });
    };
    let n_black = core.iter().filter(|r| r.race == Race::Black).count();
    exact("population size", cfg.n as f64, core.len() as f64);
    exact("black count", cfg.n_black as f64, n_black as f64);

    let mut banded = |name: &str, target: f64, achieved: f64, tol: f64| {
        checks.push(TargetCheck {
            name: name.into(),
            target,
            achieved,
            tolerance: tol,
            pass: (achieved - target).abs() <= tol,
        });
    };

    for (label, race, targets) in [
        ("black", Race::Black, cfg.black_tier5_quartiles),
        ("white", Race::White, cfg.white_tier5_quartiles),
    ] {
        let achieved = quartiles(&core, 5, race).unwrap_or((0, 0, 0));
        for (stat, t, a) in [
            ("q1", targets.0, achieved.0),
            ("median", targets.1, achieved.1),
            ("q3", targets.2, achieved.2),
        ] {
            banded(
                &format!("{label} tier5 lsat {stat}"),
                t as f64,
                a as f64,
                cfg.quartile_tolerance as f64,
            );
        }
    }

    let black_tier1 = core.iter().filter(|r| r.race == Race::Black && r.tier == 1).count();
    banded(
        "black tier1 count",
        cfg.black_tier1_target,
        black_tier1 as f64,
        cfg.black_tier1_tolerance,
    );

    let groups = score_low_ses(&core)?;
    let overlap = core
        .iter()
        .zip(&groups)
        .filter(|(r, &g)| r.race == Race::Black && g == SesGroup::LowSes)
        .count();
    banded(
        "low-ses black overlap",
        cfg.low_ses_black_overlap_target,
        overlap as f64,
        cfg.low_ses_black_overlap_tolerance,
    );

    let low_tier1 = core
        .iter()
        .zip(&groups)
        .filter(|(r, &g)| r.tier == 1 && g == SesGroup::LowSes)
        .count();
    banded(
        "low-ses tier1 count",
        cfg.low_ses_tier1_target,
        low_tier1 as f64,
        cfg.low_ses_tier1_tolerance,
    );

    let imputer = ses::SesImputer::fit(&core)?;
    let completed = imputer.complete_all(&core)?;
    let model = ses::fit_ses_score_model(&completed)?;
    banded(
        "first-pc variance explained",
        cfg.pc_variance_target,
        model.variance_explained,
        cfg.pc_variance_tolerance,
    );

    Ok(GeneratorManifest { checks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset;
    use std::sync::OnceLock;

    fn default_population() -> &'static (Vec<StudentRecord>, GeneratorManifest) {
        static POP: OnceLock<(Vec<StudentRecord>, GeneratorManifest)> = OnceLock::new();
        POP.get_or_init(|| generate_population(&GeneratorConfig::default()).unwrap())
    }

    #[test]
    fn default_population_sizes() {
        let (records, _) = default_population();
        assert_eq!(records.len(), 27_000);
        assert_eq!(records.iter().filter(|r| r.race == Race::Black).count(), 1_510);
        assert!(records.iter().all(|r| (11..=48).contains(&r.lsat)));
        assert!(records.iter().all(|r| (1.0..=4.0).contains(&r.ugpa)));
        assert!(records.iter().all(|r| (1..=5).contains(&r.tier)));
    }

    #[test]
    fn default_population_hits_every_calibration_target() {
        let (_, manifest) = default_population();
        for c in &manifest.checks {
            assert!(
                c.pass,
                "{}: target {} achieved {} (tol {})",
                c.name, c.target, c.achieved, c.tolerance
            );
        }
    }

    #[test]
    fn generation_is_deterministic_and_round_trips() {
        let cfg = GeneratorConfig {
            n: 800,
            n_black: 60,
            ..GeneratorConfig::default()
        };
        let (a, _) = generate_population(&cfg).unwrap();
        let (b, _) = generate_population(&cfg).unwrap();
        let mut buf_a = Vec::new();
        let mut buf_b = Vec::new();
        dataset::write_dataset(&mut buf_a, &a).unwrap();
        dataset::write_dataset(&mut buf_b, &b).unwrap();
        assert_eq!(buf_a, buf_b);
        let (parsed, errors) = dataset::parse_dataset(buf_a.as_slice()).unwrap();
        assert!(errors.is_empty());
        assert_eq!(parsed.len(), a.len());
    }

    #[test]
    fn generated_file_parses_with_zero_errors() {
        let (records, _) = default_population();
        let mut buf = Vec::new();
        dataset::write_dataset(&mut buf, records).unwrap();
        let (parsed, errors) = dataset::parse_dataset(buf.as_slice()).unwrap();
        assert!(errors.is_empty(), "{} parse errors", errors.len());
        assert_eq!(parsed.len(), records.len());
    }

    #[test]
    fn non_monotone_quartile_targets_rejected() {
        let cfg = GeneratorConfig {
            black_tier5_quartiles: (27, 24, 21),
            ..GeneratorConfig::default()
        };
        assert!(generate_population(&cfg).is_err());
    }

    #[test]
    fn shuffled_races_break_the_overlap_target() {
        let (records, _) = default_population();
        // Move the black label onto an id-interleaved subset: SES no
        // longer correlates with it, so the overlap check must fail.
        let mut shuffled = records.clone();
        let n_black = shuffled.iter().filter(|r| r.race == Race::Black).count();
        for r in shuffled.iter_mut() {
            r.race = Race::White;
        }
        let step = shuffled.len() / n_black;
        for k in 0..n_black {
            shuffled[k * step].race = Race::Black;
        }
        let manifest = calibration_report(&shuffled, &GeneratorConfig::default()).unwrap();
        let overlap = manifest
            .checks
            .iter()
            .find(|c| c.name == "low-ses black overlap")
            .unwrap();
        assert!(!overlap.pass, "overlap unexpectedly passed at {}", overlap.achieved);
    }

    #[test]
    fn filtered_block_survives_the_ingest_filters() {
        let cfg = GeneratorConfig {
            n: 1000,
            n_black: 80,
            include_filtered_records: true,
            ..GeneratorConfig::default()
        };
        let (records, _) = generate_population(&cfg).unwrap();
        assert!(records.len() > 1000);
        let pop = dataset::filter_analysis_population(records).unwrap();
        assert_eq!(pop.records.len(), 1000);
        assert!(pop.provenance.removed_tier6 > 0);
        assert!(pop.provenance.removed_race > 0);
    }

    #[test]
    fn manifest_text_is_complete() {
        let (_, manifest) = default_population();
        let text = manifest.to_delimited();
        assert_eq!(text.lines().count(), manifest.checks.len() + 1);
        assert!(text.contains("first-pc variance explained"));
    }
}
