//! SES component imputation, principal-component scoring, and the
//! low/high SES split sized to the black/white populations.

use crate::dataset::{Race, SesProfile, SesValue, StudentRecord};
use crate::error::{Error, Result};
use nalgebra::{DMatrix, SymmetricEigen};

/// Component order used everywhere: occ_mom, occ_dad, ed_mom, ed_dad, fam_inc.
pub const COMPONENT_NAMES: [&str; 5] = ["occ_mom", "occ_dad", "ed_mom", "ed_dad", "fam_inc"];

/// A fully imputed SES profile in component order.
pub type CompletedSes = [f64; 5];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SesGroup {
    LowSes,
    HighSes,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SesAssignment {
    pub score: f64,
    pub alt_score: f64,
    pub group: SesGroup,
}

/// First principal component of the five standardized components.
#[derive(Debug, Clone, PartialEq)]
pub struct SesScoreModel {
    pub loadings: [f64; 5],
    pub component_means: [f64; 5],
    pub component_sds: [f64; 5],
    pub variance_explained: f64,
}

fn ses_num(v: SesValue) -> Option<f64> {
    match v {
        SesValue::Value(n) => Some(n as f64),
        _ => None,
    }
}

/// Outcome of the local (per-student) completion rules: parental
/// components if recoverable, and the raw fam_inc if present.
struct LocalCompletion {
    parental: Option<[f64; 4]>, // occ_mom, occ_dad, ed_mom, ed_dad
    fam_inc: Option<f64>,
}

fn complete_locally(p: &SesProfile) -> LocalCompletion {
    // Homemaker resolves to that parent's education when available,
    // otherwise it is treated as missing for the remaining rules.
    let resolve = |occ: SesValue, ed: SesValue| -> (Option<f64>, Option<f64>) {
        let ed_v = ses_num(ed);
        let occ_v = match occ {
            SesValue::Homemaker => ed_v,
            other => ses_num(other),
        };
        match (occ_v, ed_v) {
            (Some(o), Some(e)) => (Some(o), Some(e)),
            (Some(o), None) => (Some(o), Some(o)),
            (None, Some(e)) => (Some(e), Some(e)),
            (None, None) => (None, None),
        }
    };

    let (mut om, mut em) = resolve(p.occ_mom, p.ed_mom);
    let (mut od, mut ed) = resolve(p.occ_dad, p.ed_dad);
    // One parent fully missing: copy the other parent's pair.
    if om.is_none() && od.is_some() {
        om = od;
        em = ed;
    } else if od.is_none() && om.is_some() {
        od = om;
        ed = em;
    }

    let parental = match (om, od, em, ed) {
        (Some(a), Some(b), Some(c), Some(d)) => Some([a, b, c, d]),
        _ => None,
    };
    LocalCompletion {
        parental,
        fam_inc: ses_num(p.fam_inc),
    }
}

/// Fraction of `sorted` strictly below `v`.
fn frac_below(sorted: &[f64], v: f64) -> f64 {
    let k = sorted.partition_point(|&x| x < v);
    k as f64 / sorted.len() as f64
}

/// Empirical quantile with linear interpolation between order statistics.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = p.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Population percentile tables backing the cross-student imputation
/// rules (fam_inc percentile -> parental score and vice versa).
#[derive(Debug, Clone)]
pub struct SesImputer {
    fam_inc_sorted: Vec<f64>,
    parental_score_sorted: Vec<f64>,
}

impl SesImputer {
    pub fn fit(records: &[StudentRecord]) -> Result<SesImputer> {
        let mut fam = Vec::new();
        let mut parental = Vec::new();
        for r in records {
            let local = complete_locally(&r.ses);
            if let Some(f) = local.fam_inc {
                fam.push(f);
            }
            if let Some(p) = local.parental {
                parental.push(p.iter().sum::<f64>());
            }
        }
        if fam.is_empty() || parental.is_empty() {
            return Err(Error::Data(
                "cannot build SES percentile tables: no observed fam_inc or parental data".into(),
            ));
        }
        fam.sort_by(|a, b| a.total_cmp(b));
        parental.sort_by(|a, b| a.total_cmp(b));
        Ok(SesImputer {
            fam_inc_sorted: fam,
            parental_score_sorted: parental,
        })
    }

    /// Deterministic completion of one profile.
    pub fn complete(&self, profile: &SesProfile) -> Result<CompletedSes> {
        if profile.all_missing() {
            return Err(Error::Data("all five SES components missing".into()));
        }
        let local = complete_locally(profile);
        let parental = match local.parental {
            Some(p) => p,
            None => {
                // Both parents fully missing: place the parental score at
                // the student's fam_inc percentile, split evenly across
                // the four components.
                let f = local
                    .fam_inc
                    .ok_or_else(|| Error::Data("all five SES components missing".into()))?;
                let pct = frac_below(&self.fam_inc_sorted, f);
                let target = quantile(&self.parental_score_sorted, pct);
                [target / 4.0; 4]
            }
        };
        let fam_inc = match local.fam_inc {
            Some(f) => f,
            None => {
                let score: f64 = parental.iter().sum();
                let pct = frac_below(&self.parental_score_sorted, score);
                quantile(&self.fam_inc_sorted, pct)
            }
        };
        Ok([parental[0], parental[1], parental[2], parental[3], fam_inc])
    }

    pub fn complete_all(&self, records: &[StudentRecord]) -> Result<Vec<CompletedSes>> {
        records.iter().map(|r| self.complete(&r.ses)).collect()
    }
}

/// Fits the PCA score model: standardize each component with
/// post-imputation moments, take the dominant eigenvector of the 5x5
/// sample correlation matrix, and flip signs so the loading sum is
/// positive.
pub fn fit_ses_score_model(completed: &[CompletedSes]) -> Result<SesScoreModel> {
    let n = completed.len();
    if n < 2 {
        return Err(Error::Data("need at least two profiles to fit the SES score".into()));
    }
    let nf = n as f64;
    let mut means = [0.0; 5];
    for c in completed {
        for j in 0..5 {
            means[j] += c[j];
        }
    }
    for m in &mut means {
        *m /= nf;
    }
    let mut sds = [0.0; 5];
    for c in completed {
        for j in 0..5 {
            sds[j] += (c[j] - means[j]).powi(2);
        }
    }
    for (j, s) in sds.iter_mut().enumerate() {
        *s = (*s / (nf - 1.0)).sqrt();
        if *s == 0.0 {
            return Err(Error::Data(format!(
                "degenerate SES component {} has zero variance",
                COMPONENT_NAMES[j]
            )));
        }
    }

    let mut corr: DMatrix<f64> = DMatrix::zeros(5, 5);
    for c in completed {
        let z: Vec<f64> = (0..5).map(|j| (c[j] - means[j]) / sds[j]).collect();
        for j in 0..5 {
            for k in j..5 {
                corr[(j, k)] += z[j] * z[k];
            }
        }
    }
    for j in 0..5 {
        for k in j..5 {
            corr[(j, k)] /= nf - 1.0;
            corr[(k, j)] = corr[(j, k)];
        }
    }

    let eig = SymmetricEigen::new(corr);
    let mut top = 0;
    for i in 1..5 {
        if eig.eigenvalues[i] > eig.eigenvalues[top] {
            top = i;
        }
    }
    let v = eig.eigenvectors.column(top);
    let sign = if v.sum() < 0.0 { -1.0 } else { 1.0 };
    let mut loadings = [0.0; 5];
    for j in 0..5 {
        loadings[j] = sign * v[j];
    }
    Ok(SesScoreModel {
        loadings,
        component_means: means,
        component_sds: sds,
        variance_explained: eig.eigenvalues[top] / 5.0,
    })
}

/// Principal-component SES score for one completed profile.
pub fn compute_ses_score(model: &SesScoreModel, completed: &CompletedSes) -> f64 {
    (0..5)
        .map(|j| model.loadings[j] * (completed[j] - model.component_means[j]) / model.component_sds[j])
        .sum()
}

/// Alternative score on the raw 1-5 scale:
/// fam_inc^2 + occ_mom*ed_mom + occ_dad*ed_dad.
pub fn compute_alt_score(completed: &CompletedSes) -> f64 {
    let [occ_mom, occ_dad, ed_mom, ed_dad, fam_inc] = *completed;
    fam_inc * fam_inc + occ_mom * ed_mom + occ_dad * ed_dad
}

/// Splits students so that exactly `count(race == black)` lowest-scoring
/// students form the low-SES group; cutoff ties break by ascending id.
pub fn assign_ses_groups(records: &[StudentRecord], scores: &[f64]) -> Vec<SesGroup> {
    assert_eq!(records.len(), scores.len());
    let n_low = records.iter().filter(|r| r.race == Race::Black).count();
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| {
        scores[a]
            .total_cmp(&scores[b])
            .then_with(|| records[a].id.cmp(&records[b].id))
    });
    let mut groups = vec![SesGroup::HighSes; records.len()];
    for &idx in order.iter().take(n_low) {
        groups[idx] = SesGroup::LowSes;
    }
    groups
}
