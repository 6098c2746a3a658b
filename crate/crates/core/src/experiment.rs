//! PSNR evaluation over peaks, noise realizations and methods.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{psnr, scale_to_peak, Image};
use crate::learning::{init_dictionary_dct, train_initial_dictionary, training_peak_for};
use crate::model::Dictionary;
use crate::noise::{anscombe_algebraic_inverse, anscombe_forward, sample_poisson, NoiseSeed};
use crate::pipeline::{spda_denoise, spda_denoise_binned, SpdaConfig};
use crate::testimage::training_image;

/// Environment variable holding the worker count (0 = one per core).
pub const THREADS_ENV: &str = "SPDA_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Spda,
    SpdaBin,
    /// Forward Anscombe followed directly by the algebraic inverse.
    AnscombeIdentity,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Spda, Method::SpdaBin, Method::AnscombeIdentity];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Spda => "spda",
            Self::SpdaBin => "spda-bin",
            Self::AnscombeIdentity => "anscombe-identity",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spda" => Ok(Self::Spda),
            "spda-bin" => Ok(Self::SpdaBin),
            "anscombe-identity" => Ok(Self::AnscombeIdentity),
            _ => Err(Error::arg(format!(
                "unknown method '{s}' (expected spda, spda-bin or anscombe-identity)"
            ))),
        }
    }
}

/// Where the starting dictionary of each run comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum InitDictionary {
    Dct,
    /// Trained on the procedural training image at the bucketed peak.
    Trained,
    Fixed(Dictionary),
}

/// `anscombe_algebraic_inverse(anscombe_forward(noisy))`.
pub fn anscombe_identity(noisy: &Image) -> Result<Image> {
    anscombe_algebraic_inverse(&anscombe_forward(noisy)?)
}

/// Side of the generated training image for a patch size.
pub fn training_size(patch_side: usize) -> usize {
    (8 * patch_side).max(crate::testimage::MIN_SIZE)
}

/// Starting dictionaries per training peak, built on first use.
pub struct DictionaryCache {
    init: InitDictionary,
    cfg: SpdaConfig,
    trained: BTreeMap<u64, Dictionary>,
}

impl DictionaryCache {
    pub fn new(init: InitDictionary, cfg: &SpdaConfig) -> Self {
        Self {
            init,
            cfg: cfg.clone(),
            trained: BTreeMap::new(),
        }
    }

    /// Dictionary for images whose (effective) peak is `peak`.
    pub fn for_peak(&mut self, peak: f64) -> Result<Dictionary> {
        match &self.init {
            InitDictionary::Dct => init_dictionary_dct(self.cfg.patch_side),
            InitDictionary::Fixed(d) => Ok(d.clone()),
            InitDictionary::Trained => {
                let bucket = training_peak_for(peak);
                if let Some(d) = self.trained.get(&bucket.to_bits()) {
                    return Ok(d.clone());
                }
                let img = training_image(training_size(self.cfg.patch_side))?;
                let cfg = SpdaConfig {
                    binning: false,
                    ..self.cfg.clone()
                };
                let d = train_initial_dictionary(&img, bucket, &cfg)?;
                self.trained.insert(bucket.to_bits(), d.clone());
                Ok(d)
            }
        }
    }
}

/// Noise seed of one (peak, realization) cell.
pub fn cell_seed(base: u64, peak: f64, realization: usize) -> NoiseSeed {
    let mut h = splitmix64(base);
    h = splitmix64(h ^ peak.to_bits());
    h = splitmix64(h ^ realization as u64);
    NoiseSeed(h)
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct ExperimentOptions {
    pub image_name: String,
    pub peaks: Vec<f64>,
    pub realizations: usize,
    pub methods: Vec<Method>,
    pub init: InitDictionary,
    /// Record wall time per cell. Off by default so output is reproducible.
    pub timings: bool,
}

/// One CSV line. `realization` is the index, or `mean` for averaged rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub image: String,
    pub peak: f64,
    pub realization: String,
    pub method: Method,
    pub psnr_db: f64,
    pub seconds: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultTable {
    pub cells: Vec<ResultRow>,
    pub means: Vec<ResultRow>,
}

impl ResultTable {
    /// Mean PSNR for a (peak, method) pair.
    pub fn mean(&self, peak: f64, method: Method) -> Option<f64> {
        self.means
            .iter()
            .find(|r| r.peak == peak && r.method == method)
            .map(|r| r.psnr_db)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in self.cells.iter().chain(&self.means) {
            w.serialize(row).map_err(csv_error)?;
        }
        w.flush().map_err(|e| Error::Internal(format!("writing CSV: {e}")))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Internal(e.to_string()))
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Internal(format!("writing CSV: {e}"))
}

/// Scales `clean` to each peak, adds noise per realization, runs every
/// method, and scores it against the scaled clean image.
pub fn run_experiment(clean: &Image, opts: &ExperimentOptions, cfg: &SpdaConfig) -> Result<ResultTable> {
    if opts.realizations == 0 {
        return Err(Error::arg("at least one realization is required"));
    }
    if opts.peaks.is_empty() || opts.methods.is_empty() {
        return Err(Error::arg("experiment needs at least one peak and one method"));
    }
    cfg.validate()?;
    let mut dicts = DictionaryCache::new(opts.init.clone(), cfg);
    let mut table = ResultTable::default();
    for &peak in &opts.peaks {
        let reference = scale_to_peak(clean, peak)?;
        let mut sums = vec![0.0; opts.methods.len()];
        let mut times = vec![0.0; opts.methods.len()];
        for realization in 0..opts.realizations {
            let noisy = sample_poisson(&reference, cell_seed(cfg.seed, peak, realization))?;
            for (m, &method) in opts.methods.iter().enumerate() {
                let start = Instant::now();
                let out = match method {
                    Method::Spda => {
                        let d0 = dicts.for_peak(peak)?;
                        spda_denoise(&noisy, &d0, cfg, None)?.output
                    }
                    Method::SpdaBin => {
                        let f = cfg.bin_factor as f64;
                        let d0 = dicts.for_peak(f * f * peak)?;
                        spda_denoise_binned(&noisy, &d0, cfg, None)?.output
                    }
                    Method::AnscombeIdentity => anscombe_identity(&noisy)?,
                };
                let secs = start.elapsed().as_secs_f64();
                let score = psnr(&reference, &out)?;
                sums[m] += score;
                times[m] += secs;
                table.cells.push(ResultRow {
                    image: opts.image_name.clone(),
                    peak,
                    realization: realization.to_string(),
                    method,
                    psnr_db: score,
                    seconds: opts.timings.then_some(secs),
                });
            }
        }
        let n = opts.realizations as f64;
        for (m, &method) in opts.methods.iter().enumerate() {
            table.means.push(ResultRow {
                image: opts.image_name.clone(),
                peak,
                realization: "mean".into(),
                method,
                psnr_db: sums[m] / n,
                seconds: opts.timings.then_some(times[m] / n),
            });
        }
    }
    Ok(table)
}

/// Runs `f` on a dedicated pool of `threads` workers (0 = one per core).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Internal(format!("building thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Worker count from `SPDA_THREADS`; unset means 0.
pub fn threads_from_env() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse()
            .map_err(|_| Error::arg(format!("{THREADS_ENV} must be a non-negative integer, got '{v}'"))),
        _ => Ok(0),
    }
}
