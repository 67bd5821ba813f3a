//! Threshold calibration and score-distribution tooling.
//!
//! Turns labeled collections of aggregate originality scores into
//! [`ThresholdProfile`]s, summarizes classifier quality against a profile,
//! and renders Gaussian kernel density estimates of score samples for
//! external plotting.
//!
//! Two calibrators ship, because the threshold direction is a policy choice:
//!
//! * [`calibrate_sweep`] (default) — picks the ρ maximizing balanced
//!   accuracy over both labeled samples;
//! * [`calibrate_percentile`] — places ρ at a quantile of the llm sample
//!   (read as "p of llm scores fall at or below ρ"), needing no human
//!   sample at all.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::score::{CalibrationMethod, SampleCounts, ThresholdProfile, VerdictLabel};

/// Errors from calibration, accuracy, and density operations.
#[derive(Debug, Error)]
pub enum CalibrateError {
    /// A sample had no scores.
    #[error("empty sample: {0}")]
    EmptySample(String),
    /// A score was negative, NaN, or infinite.
    #[error("invalid score: {0}")]
    InvalidScore(String),
    /// The two samples were scored by different evaluators.
    #[error("profile evaluator mismatch: {0}")]
    EvaluatorMismatch(String),
    /// Percentile outside the open interval (0, 1).
    #[error("invalid percentile: {0}")]
    InvalidPercentile(f64),
    /// Non-positive or non-finite KDE bandwidth.
    #[error("invalid bandwidth: {0}")]
    InvalidBandwidth(f64),
    /// Fewer than two KDE grid points.
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    /// A profile document failed to read, parse, or validate.
    #[error("profile file: {0}")]
    ProfileFile(String),
}

impl From<std::io::Error> for CalibrateError {
    fn from(e: std::io::Error) -> Self {
        CalibrateError::ProfileFile(e.to_string())
    }
}

/// A labeled collection of aggregate scores from one evaluator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreSample {
    scores: Vec<f64>,
    label: VerdictLabel,
    evaluator: String,
    /// Free-form provenance (dataset, context_len, completion_len, …).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    tags: BTreeMap<String, String>,
}

impl ScoreSample {
    /// Build a sample, validating that scores exist and are finite and
    /// non-negative.
    pub fn new(
        scores: Vec<f64>,
        label: VerdictLabel,
        evaluator: &str,
    ) -> Result<ScoreSample, CalibrateError> {
        if scores.is_empty() {
            return Err(CalibrateError::EmptySample(format!(
                "no {label} scores for evaluator {evaluator}"
            )));
        }
        if let Some(bad) = scores.iter().find(|s| !s.is_finite() || **s < 0.0) {
            return Err(CalibrateError::InvalidScore(format!(
                "{bad} in the {label} sample (scores must be finite and non-negative)"
            )));
        }
        Ok(ScoreSample {
            scores,
            label,
            evaluator: evaluator.to_string(),
            tags: BTreeMap::new(),
        })
    }

    pub fn with_tag(mut self, key: &str, value: &str) -> ScoreSample {
        self.tags.insert(key.to_string(), value.to_string());
        self
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn label(&self) -> VerdictLabel {
        self.label
    }

    pub fn evaluator(&self) -> &str {
        &self.evaluator
    }

    pub fn tags(&self) -> &BTreeMap<String, String> {
        &self.tags
    }
}

/// Result of a sweep calibration: the profile plus how well it separated
/// the calibration data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub profile: ThresholdProfile,
    /// Balanced accuracy the chosen ρ achieves on the calibration samples.
    pub balanced_accuracy: f64,
    /// True when no threshold beats chance (balanced accuracy ≤ 0.5); the
    /// profile is still returned but should be treated as uninformative.
    pub degenerate: bool,
}

/// Classifier quality of a profile against labeled samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracySummary {
    /// Overall fraction of correctly classified scores.
    pub acc: f64,
    /// Fraction of human scores strictly above ρ.
    pub tpr: f64,
    /// Fraction of llm scores strictly above ρ.
    pub fpr: f64,
    /// (tpr + (1 − fpr)) / 2.
    pub balanced_acc: f64,
}

/// Gaussian KDE of a score sample on a uniform grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DensityCurve {
    /// Strictly increasing evaluation points spanning [min−5h, max+5h].
    pub grid: Vec<f64>,
    /// Density at each grid point; `density[i]` pairs with `grid[i]`.
    pub density: Vec<f64>,
    pub bandwidth: f64,
}

/// Timestamp recorded in profiles. Reads `SPOT_CREATED_AT` so scripted runs
/// can pin it; otherwise the literal `unset`, keeping profile documents
/// byte-reproducible (wall-clock times belong in run metadata sidecars).
pub fn profile_timestamp() -> String {
    std::env::var("SPOT_CREATED_AT").unwrap_or_else(|_| "unset".to_string())
}

fn balanced_accuracy_at(rho: f64, human: &[f64], llm: &[f64]) -> f64 {
    let tpr = human.iter().filter(|&&s| s > rho).count() as f64 / human.len() as f64;
    let fpr = llm.iter().filter(|&&s| s > rho).count() as f64 / llm.len() as f64;
    (tpr + (1.0 - fpr)) / 2.0
}

/// Calibrate ρ by sweeping every decision boundary the data distinguishes.
///
/// Candidates are the midpoints between adjacent distinct pooled scores,
/// plus the pooled maximum (the "classify everything llm" boundary, since
/// comparison is strict). Among balanced-accuracy maximizers the midpoint of
/// the widest separating interval wins, then the lowest ρ.
pub fn calibrate_sweep(
    human: &ScoreSample,
    llm: &ScoreSample,
) -> Result<SweepOutcome, CalibrateError> {
    if human.evaluator != llm.evaluator {
        return Err(CalibrateError::EvaluatorMismatch(format!(
            "human sample from {:?}, llm sample from {:?}",
            human.evaluator, llm.evaluator
        )));
    }

    let mut pooled: Vec<f64> = human.scores.iter().chain(&llm.scores).copied().collect();
    pooled.sort_by(|a, b| a.partial_cmp(b).expect("samples are validated finite"));
    pooled.dedup();

    // (candidate ρ, width of the interval it separates)
    let mut candidates: Vec<(f64, f64)> = pooled
        .windows(2)
        .map(|w| ((w[0] + w[1]) / 2.0, w[1] - w[0]))
        .collect();
    candidates.push((*pooled.last().expect("validated non-empty"), 0.0));

    let mut best_rho = candidates[0].0;
    let mut best_width = candidates[0].1;
    let mut best_bacc = balanced_accuracy_at(best_rho, &human.scores, &llm.scores);
    for &(rho, width) in &candidates[1..] {
        let bacc = balanced_accuracy_at(rho, &human.scores, &llm.scores);
        let better = bacc > best_bacc
            || (bacc == best_bacc && width > best_width)
            || (bacc == best_bacc && width == best_width && rho < best_rho);
        if better {
            best_rho = rho;
            best_width = width;
            best_bacc = bacc;
        }
    }

    let degenerate = best_bacc <= 0.5;
    if degenerate {
        log::warn!(
            "sweep calibration for {} is degenerate: no threshold separates \
             the samples (balanced accuracy {best_bacc})",
            human.evaluator
        );
    }
    let profile = ThresholdProfile {
        model_id: human.evaluator.clone(),
        rho: best_rho,
        method: CalibrationMethod::Sweep,
        p: None,
        counts: SampleCounts {
            human: human.scores.len(),
            llm: llm.scores.len(),
        },
        created_at: profile_timestamp(),
    };
    profile
        .validate()
        .map_err(|e| CalibrateError::InvalidScore(e.to_string()))?;
    Ok(SweepOutcome {
        profile,
        balanced_accuracy: best_bacc,
        degenerate,
    })
}

/// Calibrate ρ at the nearest-rank p-quantile of the llm sample.
///
/// Nearest rank means `sorted[⌈p·n⌉ − 1]` — no interpolation, so the result
/// is always an observed score and reproduces exactly across platforms.
pub fn calibrate_percentile(
    llm: &ScoreSample,
    p: f64,
) -> Result<ThresholdProfile, CalibrateError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(CalibrateError::InvalidPercentile(p));
    }
    let mut sorted = llm.scores.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("samples are validated finite"));
    let rank = (p * sorted.len() as f64).ceil() as usize;
    let rho = sorted[rank.max(1) - 1];

    let profile = ThresholdProfile {
        model_id: llm.evaluator.clone(),
        rho,
        method: CalibrationMethod::Percentile,
        p: Some(p),
        counts: SampleCounts {
            human: 0,
            llm: sorted.len(),
        },
        created_at: profile_timestamp(),
    };
    profile
        .validate()
        .map_err(|e| CalibrateError::InvalidScore(e.to_string()))?;
    Ok(profile)
}

/// Classification rates of `profile.rho` against labeled samples.
pub fn accuracy(
    human: &ScoreSample,
    llm: &ScoreSample,
    profile: &ThresholdProfile,
) -> AccuracySummary {
    let rho = profile.rho;
    let true_human = human.scores.iter().filter(|&&s| s > rho).count();
    let false_human = llm.scores.iter().filter(|&&s| s > rho).count();
    let tpr = true_human as f64 / human.scores.len() as f64;
    let fpr = false_human as f64 / llm.scores.len() as f64;
    AccuracySummary {
        acc: (true_human + (llm.scores.len() - false_human)) as f64
            / (human.scores.len() + llm.scores.len()) as f64,
        tpr,
        fpr,
        balanced_acc: (tpr + (1.0 - fpr)) / 2.0,
    }
}

/// Default KDE bandwidth, matching the narrow kernels used for score plots.
pub const DEFAULT_BANDWIDTH: f64 = 0.001;
/// Default KDE grid resolution.
pub const DEFAULT_GRID_POINTS: usize = 2048;

/// Gaussian kernel density estimate of a sample.
///
/// `density(x) = (1/(n·h)) Σᵢ φ((x − sᵢ)/h)` with φ the standard normal
/// density, evaluated on `grid_points` uniform points spanning
/// `[min − 5h, max + 5h]`. On that span a proper KDE integrates to 1 up to
/// the <1e-6 mass beyond ±5 standard deviations.
pub fn kde_density(
    sample: &ScoreSample,
    bandwidth: f64,
    grid_points: usize,
) -> Result<DensityCurve, CalibrateError> {
    if !bandwidth.is_finite() || bandwidth <= 0.0 {
        return Err(CalibrateError::InvalidBandwidth(bandwidth));
    }
    if grid_points < 2 {
        return Err(CalibrateError::InvalidGrid(format!(
            "need at least 2 grid points, got {grid_points}"
        )));
    }
    let lo = sample
        .scores
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
        - 5.0 * bandwidth;
    let hi = sample
        .scores
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
        + 5.0 * bandwidth;
    let step = (hi - lo) / (grid_points - 1) as f64;

    let norm = 1.0 / (sample.scores.len() as f64 * bandwidth * (2.0 * std::f64::consts::PI).sqrt());
    let mut grid = Vec::with_capacity(grid_points);
    let mut density = Vec::with_capacity(grid_points);
    for i in 0..grid_points {
        let x = lo + i as f64 * step;
        let mut acc = 0.0;
        for &s in &sample.scores {
            let z = (x - s) / bandwidth;
            acc += (-0.5 * z * z).exp();
        }
        grid.push(x);
        density.push(norm * acc);
    }
    Ok(DensityCurve {
        grid,
        density,
        bandwidth,
    })
}

impl DensityCurve {
    /// Trapezoidal integral over the grid; ≈ 1 for any curve from
    /// [`kde_density`].
    pub fn integral(&self) -> f64 {
        self.grid
            .windows(2)
            .zip(self.density.windows(2))
            .map(|(x, y)| (x[1] - x[0]) * (y[0] + y[1]) / 2.0)
            .sum()
    }

    /// Density at the grid point nearest to `x`.
    pub fn nearest(&self, x: f64) -> f64 {
        let i = self
            .grid
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| {
                (*a - x).abs().partial_cmp(&(*b - x).abs()).expect("finite grid")
            })
            .map(|(i, _)| i)
            .expect("grid is never empty");
        self.density[i]
    }

    /// Render as a two-column CSV (`grid,density`), full float precision.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("grid,density\n");
        for (x, d) in self.grid.iter().zip(&self.density) {
            out.push_str(&format!("{x},{d}\n"));
        }
        out
    }
}

/// Write a profile as pretty-printed JSON.
pub fn save_profile(profile: &ThresholdProfile, path: &Path) -> Result<(), CalibrateError> {
    let json = serde_json::to_string_pretty(profile)
        .map_err(|e| CalibrateError::ProfileFile(e.to_string()))?;
    std::fs::write(path, json + "\n")?;
    Ok(())
}

/// Read and validate a profile document.
pub fn load_profile(path: &Path) -> Result<ThresholdProfile, CalibrateError> {
    let profile: ThresholdProfile = serde_json::from_str(&std::fs::read_to_string(path)?)
        .map_err(|e| CalibrateError::ProfileFile(e.to_string()))?;
    profile
        .validate()
        .map_err(|e| CalibrateError::ProfileFile(e.to_string()))?;
    Ok(profile)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn human(scores: &[f64]) -> ScoreSample {
        ScoreSample::new(scores.to_vec(), VerdictLabel::Human, "eval").unwrap()
    }

    fn llm(scores: &[f64]) -> ScoreSample {
        ScoreSample::new(scores.to_vec(), VerdictLabel::Llm, "eval").unwrap()
    }

    /// Brute-force balanced-accuracy maximum over a uniform threshold grid.
    fn brute_force_best(human: &[f64], llm: &[f64], points: usize) -> f64 {
        let pooled: Vec<f64> = human.iter().chain(llm).copied().collect();
        let lo = pooled.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = pooled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (0..points)
            .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
            .map(|rho| balanced_accuracy_at(rho, human, llm))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn sweep_places_rho_in_the_widest_gap() {
        let out = calibrate_sweep(&human(&[1.0, 1.2, 1.4]), &llm(&[0.01, 0.02])).unwrap();
        assert!((out.profile.rho - 0.51).abs() < 1e-12, "rho={}", out.profile.rho);
        assert_eq!(out.balanced_accuracy, 1.0);
        assert!(!out.degenerate);
        assert_eq!(out.profile.method, CalibrationMethod::Sweep);
        assert_eq!(out.profile.counts.human, 3);
        assert_eq!(out.profile.counts.llm, 2);
    }

    #[test]
    fn sweep_on_indistinguishable_samples_is_degenerate() {
        let out = calibrate_sweep(&human(&[0.5, 0.5]), &llm(&[0.5, 0.5])).unwrap();
        assert_eq!(out.profile.rho, 0.5);
        assert_eq!(out.balanced_accuracy, 0.5);
        assert!(out.degenerate);
    }

    #[test]
    fn sweep_separates_wide_clusters_perfectly() {
        // Human scores well above a tight low llm cluster: any rho between
        // the clusters separates them, and the sweep must find one.
        let out = calibrate_sweep(
            &human(&[0.799, 0.81, 0.76]),
            &llm(&[0.034, 0.002, 0.021, 0.011]),
        )
        .unwrap();
        assert_eq!(out.balanced_accuracy, 1.0);
        assert!(out.profile.rho > 0.034 && out.profile.rho < 0.76);
    }

    #[test]
    fn sweep_rejects_mismatched_evaluators() {
        let h = ScoreSample::new(vec![1.0], VerdictLabel::Human, "alpha").unwrap();
        let l = ScoreSample::new(vec![0.1], VerdictLabel::Llm, "beta").unwrap();
        let err = calibrate_sweep(&h, &l).unwrap_err();
        assert!(err.to_string().starts_with("profile evaluator mismatch"));
    }

    #[test]
    fn empty_and_invalid_samples_are_rejected() {
        assert!(matches!(
            ScoreSample::new(vec![], VerdictLabel::Human, "e"),
            Err(CalibrateError::EmptySample(_))
        ));
        assert!(matches!(
            ScoreSample::new(vec![0.1, -0.2], VerdictLabel::Llm, "e"),
            Err(CalibrateError::InvalidScore(_))
        ));
        assert!(matches!(
            ScoreSample::new(vec![f64::NAN], VerdictLabel::Llm, "e"),
            Err(CalibrateError::InvalidScore(_))
        ));
    }

    #[test]
    fn percentile_of_a_constant_sample_is_the_constant() {
        let profile = calibrate_percentile(&llm(&[0.02; 100]), 0.95).unwrap();
        assert_eq!(profile.rho, 0.02);
        assert_eq!(profile.method, CalibrationMethod::Percentile);
        assert_eq!(profile.p, Some(0.95));
        assert_eq!(profile.counts.llm, 100);
    }

    #[test]
    fn percentile_uses_nearest_rank_without_interpolation() {
        let scores: Vec<f64> = (1..=10).map(|i| i as f64 / 100.0).collect();
        let profile = calibrate_percentile(&llm(&scores), 0.95).unwrap();
        assert_eq!(profile.rho, 0.10);
        // Lower p values pick earlier order statistics exactly.
        assert_eq!(calibrate_percentile(&llm(&scores), 0.05).unwrap().rho, 0.01);
        assert_eq!(calibrate_percentile(&llm(&scores), 0.50).unwrap().rho, 0.05);
    }

    #[test]
    fn percentile_domain_is_exclusive() {
        for p in [1.0, 0.0, -0.2, 1.5, f64::NAN] {
            let err = calibrate_percentile(&llm(&[0.1]), p).unwrap_err();
            assert!(err.to_string().starts_with("invalid percentile"), "{err}");
        }
    }

    #[test]
    fn accuracy_counts_strictly_above_rho() {
        let profile = ThresholdProfile {
            model_id: "eval".to_string(),
            rho: 0.5,
            method: CalibrationMethod::Sweep,
            p: None,
            counts: SampleCounts { human: 2, llm: 1 },
            created_at: "unset".to_string(),
        };
        let summary = accuracy(&human(&[1.0, 0.01]), &llm(&[0.02]), &profile);
        assert_eq!(summary.tpr, 0.5);
        assert_eq!(summary.fpr, 0.0);
        assert_eq!(summary.balanced_acc, 0.75);
        assert!((summary.acc - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn rho_above_all_scores_scores_at_chance() {
        let profile = ThresholdProfile {
            model_id: "eval".to_string(),
            rho: 99.0,
            method: CalibrationMethod::Sweep,
            p: None,
            counts: SampleCounts { human: 2, llm: 2 },
            created_at: "unset".to_string(),
        };
        let summary = accuracy(&human(&[1.0, 2.0]), &llm(&[0.1, 0.2]), &profile);
        assert_eq!(summary.tpr, 0.0);
        assert_eq!(summary.fpr, 0.0);
        assert_eq!(summary.balanced_acc, 0.5);
    }

    #[test]
    fn single_point_kde_peaks_at_the_gaussian_maximum() {
        // Odd grid size puts a grid point exactly on the score.
        let curve = kde_density(&llm(&[0.5]), 0.001, 2001).unwrap();
        let peak = curve.nearest(0.5);
        let expected = 1.0 / (0.001 * (2.0 * std::f64::consts::PI).sqrt());
        assert!((peak - expected).abs() < 1e-3, "peak={peak}, want {expected}");
        assert!((peak - 398.942).abs() < 1e-3);
    }

    #[test]
    fn kde_integrates_to_one() {
        let scores: Vec<f64> = (0..500).map(|i| (i % 37) as f64 / 40.0).collect();
        for (h, gp) in [(0.001, 2048), (0.05, 512), (0.01, 4096)] {
            let curve = kde_density(&llm(&scores), h, gp).unwrap();
            let integral = curve.integral();
            assert!(
                (integral - 1.0).abs() <= 0.02,
                "h={h}, gp={gp}: integral={integral}"
            );
        }
    }

    #[test]
    fn distant_kernels_leave_the_midpoint_empty() {
        let curve = kde_density(&llm(&[0.2, 0.8]), 0.001, 4097).unwrap();
        assert!(curve.nearest(0.5) < 1e-6);
    }

    #[test]
    fn kde_rejects_bad_parameters() {
        assert!(matches!(
            kde_density(&llm(&[0.5]), 0.0, 100),
            Err(CalibrateError::InvalidBandwidth(_))
        ));
        assert!(matches!(
            kde_density(&llm(&[0.5]), -1.0, 100),
            Err(CalibrateError::InvalidBandwidth(_))
        ));
        assert!(matches!(
            kde_density(&llm(&[0.5]), 0.1, 1),
            Err(CalibrateError::InvalidGrid(_))
        ));
    }

    #[test]
    fn density_csv_round_trips_through_parse() {
        let curve = kde_density(&llm(&[0.25, 0.75]), 0.05, 64).unwrap();
        let csv = curve.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("grid,density"));
        for (line, (x, d)) in lines.zip(curve.grid.iter().zip(&curve.density)) {
            let (xs, ds) = line.split_once(',').unwrap();
            assert_eq!(xs.parse::<f64>().unwrap(), *x);
            assert_eq!(ds.parse::<f64>().unwrap(), *d);
        }
    }

    #[test]
    fn profiles_round_trip_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("profile.json");
        let out = calibrate_sweep(&human(&[1.0, 1.2]), &llm(&[0.01])).unwrap();
        save_profile(&out.profile, &path).unwrap();
        let loaded = load_profile(&path).unwrap();
        assert_eq!(loaded, out.profile);
        let json = std::fs::read_to_string(&path).unwrap();
        assert!(json.contains("\"evaluator\""));
    }

    proptest! {
        /// The sweep achieves exactly the brute-force maximum when scores
        /// sit on a 0.01 lattice: every distinct-score gap is ≥ 0.01 wide,
        /// far wider than the 10,001-point grid step, so the grid samples
        /// every decision region the sweep considers.
        #[test]
        fn sweep_matches_brute_force_on_lattice_scores(
            h in proptest::collection::vec(0u32..=100, 1..40),
            l in proptest::collection::vec(0u32..=100, 1..40),
        ) {
            let hs: Vec<f64> = h.iter().map(|&v| v as f64 / 100.0).collect();
            let ls: Vec<f64> = l.iter().map(|&v| v as f64 / 100.0).collect();
            let out = calibrate_sweep(&human(&hs), &llm(&ls)).unwrap();
            let brute = brute_force_best(&hs, &ls, 10_001);
            prop_assert!(
                (out.balanced_accuracy - brute).abs() <= 1e-12,
                "sweep {} vs brute {}", out.balanced_accuracy, brute
            );
        }

        /// Nearest-rank quantiles agree with an independent
        /// smallest-index-covering-p oracle.
        #[test]
        fn percentile_matches_counting_oracle(
            scores in proptest::collection::vec(0.0f64..10.0, 1..60),
            p in 0.01f64..0.99,
        ) {
            let rho = calibrate_percentile(&llm(&scores), p).unwrap().rho;
            let mut sorted = scores.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let n = sorted.len();
            let oracle = sorted
                .iter()
                .enumerate()
                .find(|(i, _)| (i + 1) as f64 / n as f64 >= p)
                .map(|(_, &s)| s)
                .unwrap_or(*sorted.last().unwrap());
            prop_assert_eq!(rho, oracle);
        }

        /// All rates live in [0,1], and identical multisets always score at
        /// exactly chance level regardless of the threshold.
        #[test]
        fn accuracy_rates_are_bounded_and_chance_on_identical_samples(
            scores in proptest::collection::vec(0.0f64..5.0, 1..40),
            rho in 0.0f64..5.0,
        ) {
            let profile = ThresholdProfile {
                model_id: "eval".to_string(),
                rho,
                method: CalibrationMethod::Sweep,
                p: None,
                counts: SampleCounts { human: scores.len(), llm: scores.len() },
                created_at: "unset".to_string(),
            };
            let mut shuffled = scores.clone();
            shuffled.reverse();
            let summary = accuracy(&human(&scores), &llm(&shuffled), &profile);
            for rate in [summary.acc, summary.tpr, summary.fpr, summary.balanced_acc] {
                prop_assert!((0.0..=1.0).contains(&rate));
            }
            prop_assert_eq!(summary.balanced_acc, 0.5);
        }

        /// Reflecting the sample about a point mirrors the density curve.
        #[test]
        fn kde_is_mirror_symmetric(
            scores in proptest::collection::vec(0.0f64..1.0, 1..20),
            c in -1.0f64..1.0,
            h in 0.01f64..0.2,
        ) {
            let curve = kde_density(&llm(&scores), h, 257).unwrap();
            let reflected: Vec<f64> = scores.iter().map(|s| 2.0 * c - s).collect();
            let mirror = {
                // Reflected scores can be negative; bypass the non-negative
                // sample validation by shifting nothing — build directly.
                let sample = ScoreSample {
                    scores: reflected,
                    label: VerdictLabel::Llm,
                    evaluator: "eval".to_string(),
                    tags: BTreeMap::new(),
                };
                kde_density(&sample, h, 257).unwrap()
            };
            for (i, d) in curve.density.iter().enumerate() {
                let j = mirror.density.len() - 1 - i;
                prop_assert!(
                    (d - mirror.density[j]).abs() <= 1e-12,
                    "i={i}: {} vs {}", d, mirror.density[j]
                );
            }
        }
    }
}
