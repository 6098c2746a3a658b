//! The end-to-end denoiser.
//!
//! One phase groups the patches, codes every group with `k_initial` atoms,
//! averages the estimates back into an image, and then runs `rounds` of
//! {dictionary learning, re-projection, bootstrapped pursuit}. With
//! reclustering the patches are regrouped on the current estimate without
//! filtering and a second phase starts from the learned dictionary.

use std::collections::BTreeSet;
use std::time::Instant;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{group_patches, GroupPartition, GroupingParams};
use crate::error::{Error, Result};
use crate::image::{bin_image, extract_patches, psnr, reproject_average, upscale_bilinear, Image, Kernel, PatchMatrix};
use crate::learning::{dictionary_learning_round, prune_unused_atoms, InnerSteps, LearningMode, LearningState};
use crate::model::{Dictionary, GroupCode};
use crate::pursuit::{greedy_pursuit_group, PursuitOptions, PursuitResult};

/// Relative objective increase between rounds that gets flagged in the trace.
pub const ROUND_INCREASE_TOL: f64 = 1e-6;

/// Which stages of the algorithm run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Setup {
    /// Sparse coding with `k_initial` atoms only.
    I,
    /// Sparse coding followed by one bootstrapped pursuit.
    II,
    /// Simple (dictionary-only) learning, `4 * rounds` single-step rounds per
    /// phase, with reclustering.
    III,
    /// Advanced learning without reclustering.
    IV,
    /// Advanced learning with reclustering.
    V,
    /// Taken from the individual config fields.
    #[serde(rename = "custom")]
    Custom,
}

impl std::str::FromStr for Setup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "I" | "1" => Ok(Self::I),
            "II" | "2" => Ok(Self::II),
            "III" | "3" => Ok(Self::III),
            "IV" | "4" => Ok(Self::IV),
            "V" | "5" => Ok(Self::V),
            "CUSTOM" => Ok(Self::Custom),
            _ => Err(Error::arg(format!("unknown setup '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpdaConfig {
    pub patch_side: usize,
    pub k_initial: usize,
    /// Group size `l` without binning.
    pub group_size: usize,
    /// Group size `l` used on the binned image.
    pub binned_group_size: usize,
    pub rounds: usize,
    pub inner_iters_first: usize,
    pub inner_iters: usize,
    pub recluster_once: bool,
    pub kernel_side: usize,
    pub kernel_sigma: f64,
    pub eps: f64,
    pub binning: bool,
    pub bin_factor: usize,
    pub learning_mode: LearningMode,
    pub setup: Setup,
    /// Cardinality cap of the bootstrapped pursuit; `2 k_initial + 6` when unset.
    pub k_max: Option<usize>,
    pub seed: u64,
    pub pursuit: PursuitOptions,
    pub inner_steps: InnerSteps,
}

impl Default for SpdaConfig {
    fn default() -> Self {
        Self {
            patch_side: 20,
            k_initial: 2,
            group_size: 50,
            binned_group_size: 6,
            rounds: 5,
            inner_iters_first: 2,
            inner_iters: 20,
            recluster_once: true,
            kernel_side: 7,
            kernel_sigma: 1.5,
            eps: 0.0,
            binning: false,
            bin_factor: 3,
            learning_mode: LearningMode::Advanced,
            setup: Setup::V,
            k_max: None,
            seed: 0,
            pursuit: PursuitOptions::default(),
            inner_steps: InnerSteps::default(),
        }
    }
}

/// Resolved learning schedule of one phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LearningPlan {
    pub mode: LearningMode,
    pub rounds: usize,
    pub first_iters: usize,
    pub iters: usize,
}

/// Stages a configuration will execute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Plan {
    pub bootstrap_pass: bool,
    pub learning: Option<LearningPlan>,
    pub recluster: bool,
}

impl SpdaConfig {
    /// Table-scale parameters (the `Default`).
    pub fn full() -> Self {
        Self::default()
    }

    /// Small profile for 64x64 images: 8x8 patches, groups of 10, 2 rounds.
    pub fn desk() -> Self {
        Self {
            patch_side: 8,
            group_size: 10,
            rounds: 2,
            ..Self::default()
        }
    }

    pub fn with_setup(mut self, setup: Setup) -> Self {
        self.setup = setup;
        self
    }

    pub fn k_max(&self) -> usize {
        self.k_max.unwrap_or(2 * self.k_initial + 6)
    }

    /// Group size for the image the pipeline actually sees.
    pub fn effective_group_size(&self) -> usize {
        if self.binning {
            self.binned_group_size
        } else {
            self.group_size
        }
    }

    pub fn kernel(&self) -> Result<Kernel> {
        if self.kernel_side == 1 {
            Ok(Kernel::identity())
        } else {
            Kernel::gaussian(self.kernel_side, self.kernel_sigma)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("patch_side", self.patch_side),
            ("k_initial", self.k_initial),
            ("group_size", self.group_size),
            ("binned_group_size", self.binned_group_size),
            ("rounds", self.rounds),
            ("inner_iters_first", self.inner_iters_first),
            ("inner_iters", self.inner_iters),
            ("kernel_side", self.kernel_side),
            ("score_iters", self.pursuit.score_iters),
            ("refit_iters", self.pursuit.refit_iters),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::arg(format!("{name} must be at least 1")));
            }
        }
        if self.kernel_side % 2 == 0 {
            return Err(Error::arg("kernel_side must be odd"));
        }
        if !(self.kernel_sigma > 0.0) {
            return Err(Error::arg("kernel_sigma must be positive"));
        }
        if !(self.eps >= 0.0) {
            return Err(Error::arg("eps must be >= 0"));
        }
        if self.bin_factor < 2 {
            return Err(Error::arg("bin_factor must be >= 2"));
        }
        if self.k_max() < self.k_initial {
            return Err(Error::arg("k_max must be >= k_initial"));
        }
        Ok(())
    }

    /// Stages implied by `setup`.
    pub fn plan(&self) -> Plan {
        let advanced = |recluster| Plan {
            bootstrap_pass: false,
            learning: Some(LearningPlan {
                mode: LearningMode::Advanced,
                rounds: self.rounds,
                first_iters: self.inner_iters_first,
                iters: self.inner_iters,
            }),
            recluster,
        };
        match self.setup {
            Setup::I => Plan {
                bootstrap_pass: false,
                learning: None,
                recluster: false,
            },
            Setup::II => Plan {
                bootstrap_pass: true,
                learning: None,
                recluster: false,
            },
            Setup::III => Plan {
                bootstrap_pass: false,
                learning: Some(LearningPlan {
                    mode: LearningMode::Simple,
                    rounds: 4 * self.rounds,
                    first_iters: 1,
                    iters: 1,
                }),
                recluster: true,
            },
            Setup::IV => advanced(false),
            Setup::V => advanced(true),
            Setup::Custom => Plan {
                bootstrap_pass: false,
                learning: Some(LearningPlan {
                    mode: self.learning_mode,
                    rounds: self.rounds,
                    first_iters: self.inner_iters_first,
                    iters: self.inner_iters,
                }),
                recluster: self.recluster_once,
            },
        }
    }
}

/// One executed stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "stage", rename_all = "snake_case")]
pub enum Stage {
    Group { filtered: bool, groups: usize },
    FixedPursuit { k: usize },
    BootstrapPursuit { k_max: usize, mean_cardinality: f64 },
    Prune { width: usize },
    Learning { mode: LearningMode, alternations: usize },
    Recluster,
}

impl Stage {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Group { .. } => "group",
            Self::FixedPursuit { .. } => "fixed_pursuit",
            Self::BootstrapPursuit { .. } => "bootstrap_pursuit",
            Self::Prune { .. } => "prune",
            Self::Learning { .. } => "learning",
            Self::Recluster => "recluster",
        }
    }
}

/// Distinct stage kinds in a trace.
pub fn stage_kinds(stages: &[Stage]) -> BTreeSet<&'static str> {
    stages.iter().map(Stage::kind).collect()
}

/// Summary of one learning round and the pursuit that follows it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub phase: usize,
    pub round: usize,
    /// Sum of group objectives after the pursuit.
    pub objective: f64,
    pub dictionary_width: usize,
    pub mean_cardinality: f64,
    /// Objective went up by more than [`ROUND_INCREASE_TOL`] relative to the
    /// previous round of the same phase.
    pub objective_increased: bool,
    /// Learning objective before and after each alternation.
    pub learning_objective: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseReport {
    pub output: Image,
    pub psnr_vs_reference: Option<f64>,
    /// Objective after the initial pursuit.
    pub initial_objective: f64,
    pub rounds: Vec<RoundRecord>,
    pub stages: Vec<Stage>,
    pub dictionary: Dictionary,
    pub group_count: usize,
    pub seconds: f64,
}

impl DenoiseReport {
    pub fn objective_trace(&self) -> Vec<f64> {
        self.rounds.iter().map(|r| r.objective).collect()
    }

    pub fn width_trace(&self) -> Vec<usize> {
        self.rounds.iter().map(|r| r.dictionary_width).collect()
    }

    pub fn summary(&self) -> ReportSummary {
        ReportSummary {
            psnr_db: self.psnr_vs_reference,
            initial_objective: self.initial_objective,
            rounds: self.rounds.clone(),
            stages: self.stages.clone(),
            dictionary_width: self.dictionary.len(),
            group_count: self.group_count,
            seconds: self.seconds,
        }
    }
}

/// Serializable part of a [`DenoiseReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub psnr_db: Option<f64>,
    pub initial_objective: f64,
    pub rounds: Vec<RoundRecord>,
    pub stages: Vec<Stage>,
    pub dictionary_width: usize,
    pub group_count: usize,
    pub seconds: f64,
}

/// Noisy patches split by group, each `d x l_g` column-major.
struct Groups {
    partition: GroupPartition,
    patches: Vec<Array2<f64>>,
}

impl Groups {
    fn new(partition: GroupPartition, all: &PatchMatrix) -> Self {
        let patches = partition.groups().iter().map(|g| all.select(g)).collect();
        Self { partition, patches }
    }

    fn oracle(&self, estimate: &Image, side: usize) -> Result<Vec<Array2<f64>>> {
        let p = extract_patches(estimate, side)?;
        Ok(self.partition.groups().iter().map(|g| p.select(g)).collect())
    }
}

/// Shared state of one run.
struct Run<'a> {
    cfg: &'a SpdaConfig,
    noisy_patches: PatchMatrix,
    rows: usize,
    cols: usize,
    stages: Vec<Stage>,
    rounds: Vec<RoundRecord>,
}

impl Run<'_> {
    fn group(&mut self, img: &Image, kernel: Kernel) -> Result<Groups> {
        let filtered = !kernel.is_identity();
        let params = GroupingParams {
            patch_side: self.cfg.patch_side,
            min_group: self.cfg.effective_group_size(),
            kernel,
            eps: self.cfg.eps,
        };
        let partition = group_patches(img, &params)?;
        self.stages.push(Stage::Group {
            filtered,
            groups: partition.len(),
        });
        Ok(Groups::new(partition, &self.noisy_patches))
    }

    fn pursue(
        &self,
        dict: &Dictionary,
        groups: &Groups,
        k: usize,
        oracle: Option<&[Array2<f64>]>,
    ) -> Result<Vec<PursuitResult>> {
        let k = k.min(dict.len());
        let opts = self.cfg.pursuit;
        let out: Vec<Result<PursuitResult>> = groups
            .patches
            .par_iter()
            .enumerate()
            .map(|(g, q)| greedy_pursuit_group(dict, q.view(), k, oracle.map(|o| o[g].view()), &opts))
            .collect();
        out.into_iter().collect()
    }

    fn reproject<'e>(&self, groups: &Groups, estimates: impl Iterator<Item = &'e Array2<f64>>) -> Result<Image> {
        let mut data = Array2::zeros(self.noisy_patches.data().raw_dim());
        for (members, est) in groups.partition.groups().iter().zip(estimates) {
            for (col, &i) in members.iter().enumerate() {
                data.column_mut(i).assign(&est.column(col));
            }
        }
        let patches = self.noisy_patches.with_data(data)?;
        reproject_average(&patches, self.rows, self.cols)
    }

    fn bootstrap(
        &mut self,
        dict: &Dictionary,
        groups: &Groups,
        estimate: &Image,
    ) -> Result<(Vec<PursuitResult>, Image)> {
        let oracle = groups.oracle(estimate, self.cfg.patch_side)?;
        let results = self.pursue(dict, groups, self.cfg.k_max(), Some(&oracle))?;
        self.stages.push(Stage::BootstrapPursuit {
            k_max: self.cfg.k_max(),
            mean_cardinality: mean_cardinality(&results),
        });
        let img = self.reproject(groups, results.iter().map(|r| &r.estimates))?;
        Ok((results, img))
    }

    /// Learning rounds of one phase; returns the final dictionary, pursuit
    /// results and estimate.
    fn learn(
        &mut self,
        phase: usize,
        plan: LearningPlan,
        groups: &Groups,
        mut dict: Dictionary,
        mut results: Vec<PursuitResult>,
        mut estimate: Image,
    ) -> Result<(Dictionary, Vec<PursuitResult>, Image)> {
        let mut prev_objective = total_objective(&results);
        for round in 0..plan.rounds {
            let codes: Vec<GroupCode> = results.into_iter().map(|r| r.code).collect();
            let state = prune_unused_atoms(LearningState::new(dict, codes)?)?;
            self.stages.push(Stage::Prune {
                width: state.dictionary().len(),
            });
            let iters = if round == 0 { plan.first_iters } else { plan.iters };
            let (state, trace) =
                dictionary_learning_round(state, &groups.patches, iters, plan.mode, self.cfg.inner_steps)?;
            self.stages.push(Stage::Learning {
                mode: plan.mode,
                alternations: iters,
            });
            let learned: Vec<Array2<f64>> = (0..state.codes().len()).map(|g| state.group_estimates(g)).collect();
            let learned_img = self.reproject(groups, learned.iter())?;
            dict = state.into_parts().0;
            let (r, img) = self.bootstrap(&dict, groups, &learned_img)?;
            results = r;
            estimate = img;
            let objective = total_objective(&results);
            self.rounds.push(RoundRecord {
                phase,
                round,
                objective,
                dictionary_width: dict.len(),
                mean_cardinality: mean_cardinality(&results),
                objective_increased: objective > prev_objective + ROUND_INCREASE_TOL * prev_objective.abs().max(1.0),
                learning_objective: trace.objective,
            });
            prev_objective = objective;
        }
        Ok((dict, results, estimate))
    }
}

fn total_objective(results: &[PursuitResult]) -> f64 {
    results.iter().map(PursuitResult::objective).sum()
}

fn mean_cardinality(results: &[PursuitResult]) -> f64 {
    if results.is_empty() {
        return 0.0;
    }
    results.iter().map(|r| r.code.support().len() as f64).sum::<f64>() / results.len() as f64
}

/// Runs the full denoiser on `noisy` starting from dictionary `d0`.
pub fn spda_denoise(
    noisy: &Image,
    d0: &Dictionary,
    cfg: &SpdaConfig,
    reference: Option<&Image>,
) -> Result<DenoiseReport> {
    let start = Instant::now();
    cfg.validate()?;
    let side = cfg.patch_side;
    if d0.dim() != side * side {
        return Err(Error::dim(format!(
            "dictionary atoms have {} pixels, {side}x{side} patches have {}",
            d0.dim(),
            side * side
        )));
    }
    if let Some(r) = reference {
        if r.dims() != noisy.dims() {
            return Err(Error::dim(format!(
                "reference is {:?}, input is {:?}",
                r.dims(),
                noisy.dims()
            )));
        }
    }
    let plan = cfg.plan();
    let (rows, cols) = noisy.dims();
    let mut run = Run {
        cfg,
        noisy_patches: extract_patches(noisy, side)?,
        rows,
        cols,
        stages: Vec::new(),
        rounds: Vec::new(),
    };

    let mut groups = run.group(noisy, cfg.kernel()?)?;
    let mut dict = d0.clone();
    let mut results = run.pursue(&dict, &groups, cfg.k_initial, None)?;
    run.stages.push(Stage::FixedPursuit { k: cfg.k_initial });
    let initial_objective = total_objective(&results);
    let mut estimate = run.reproject(&groups, results.iter().map(|r| &r.estimates))?;

    if plan.bootstrap_pass {
        let (r, img) = run.bootstrap(&dict, &groups, &estimate)?;
        results = r;
        estimate = img;
    }
    if let Some(learning) = plan.learning {
        (dict, results, estimate) = run.learn(0, learning, &groups, dict, results, estimate)?;
        if plan.recluster {
            run.stages.push(Stage::Recluster);
            groups = run.group(&estimate, Kernel::identity())?;
            let (r, img) = run.bootstrap(&dict, &groups, &estimate)?;
            (dict, _, estimate) = run.learn(1, learning, &groups, dict, r, img)?;
        }
    }
    let _ = results;

    let psnr_vs_reference = reference.map(|r| psnr(r, &estimate)).transpose()?;
    Ok(DenoiseReport {
        output: estimate,
        psnr_vs_reference,
        initial_objective,
        rounds: run.rounds,
        stages: run.stages,
        dictionary: dict,
        group_count: groups.partition.len(),
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Bins `noisy` by `cfg.bin_factor`, denoises the small image, and upscales
/// the result back to the input size.
///
/// `d0` should match the binned peak, which is `bin_factor^2` times larger.
pub fn spda_denoise_binned(
    noisy: &Image,
    d0: &Dictionary,
    cfg: &SpdaConfig,
    reference: Option<&Image>,
) -> Result<DenoiseReport> {
    let start = Instant::now();
    cfg.validate()?;
    let f = cfg.bin_factor;
    let low = bin_image(noisy, f)?;
    let inner = SpdaConfig {
        binning: true,
        ..cfg.clone()
    };
    let mut report = spda_denoise(&low, d0, &inner, None)?;
    let (rows, cols) = noisy.dims();
    report.output = upscale_bilinear(&report.output, f, rows, cols)?;
    report.psnr_vs_reference = match reference {
        Some(r) => Some(psnr(r, &report.output)?),
        None => None,
    };
    report.seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Dispatches on `cfg.binning`.
pub fn denoise(noisy: &Image, d0: &Dictionary, cfg: &SpdaConfig, reference: Option<&Image>) -> Result<DenoiseReport> {
    if cfg.binning {
        spda_denoise_binned(noisy, d0, cfg, reference)
    } else {
        spda_denoise(noisy, d0, cfg, reference)
    }
}
