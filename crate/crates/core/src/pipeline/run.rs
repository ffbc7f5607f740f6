use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::config::{apply_style_overrides, AppConfig};
use crate::error::{Error, Result};
use crate::image::{Image, Mask};
use crate::instruction::{
    build_prompt, fallback_split, parse_llm_response, query_llm, ParsedInstruction, ParserKind, RawInstruction,
};
use crate::losses::{LossBreakdown, LossContext};
use crate::perception::{load_backend, Encoder};
use crate::scalar::Scalar;
use crate::segmentation::{get_mask, get_mask_with, HttpSegmenter, MaskProvider, ReferringSegmenter, ShapeSpec};
use crate::stylenet::{composite, optimize, CompositeMode};

/// One stylization job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub image_path: PathBuf,
    pub instruction: String,
    #[serde(default)]
    pub mask_path: Option<PathBuf>,
    /// Synthetic mask for this job; used when no mask file is given.
    #[serde(default)]
    pub mask_shape: Option<ShapeSpec>,
    /// Defaults to `<stem>.stylized.png` next to the input image.
    #[serde(default)]
    pub output_path: Option<PathBuf>,
    /// Per-job `StyleConfig` field overrides.
    #[serde(default)]
    pub overrides: Map<String, Value>,
}

impl RunManifest {
    pub fn new(image_path: impl Into<PathBuf>, instruction: impl Into<String>) -> Self {
        Self {
            image_path: image_path.into(),
            instruction: instruction.into(),
            mask_path: None,
            mask_shape: None,
            output_path: None,
            overrides: Map::new(),
        }
    }

    pub fn output_path(&self) -> PathBuf {
        match &self.output_path {
            Some(p) => p.clone(),
            None => {
                let stem = self.image_path.file_stem().map(|s| s.to_string_lossy().into_owned());
                let name = format!("{}.stylized.png", stem.as_deref().unwrap_or("output"));
                self.image_path.with_file_name(name)
            }
        }
    }

    /// Makes relative paths relative to `base`.
    pub fn resolve_relative_to(mut self, base: &Path) -> Self {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.image_path);
        if let Some(p) = self.mask_path.as_mut() {
            fix(p);
        }
        if let Some(p) = self.output_path.as_mut() {
            fix(p);
        }
        self
    }
}

/// `<output stem>.report.json` beside the output image.
pub fn report_path_for(output: &Path) -> PathBuf {
    let stem = output.file_stem().map(|s| s.to_string_lossy().into_owned());
    output.with_file_name(format!("{}.report.json", stem.as_deref().unwrap_or("output")))
}

/// Summary written next to every output image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub instruction: String,
    pub parsed: ParsedInstruction,
    pub parser: ParserKind,
    pub mask_provider: String,
    /// Objective on the returned image (before any compositing).
    pub final_loss: LossBreakdown<f64>,
    pub loss_history: Vec<LossBreakdown<f64>>,
    pub iterations: usize,
    pub seed: u64,
    pub composite: CompositeMode,
    pub wall_time_secs: f64,
    pub output_path: PathBuf,
    pub report_path: PathBuf,
}

/// A batch line that failed, with the exit code it would have produced alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchFailure {
    pub line: usize,
    pub error: String,
    pub exit_code: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub total: usize,
    pub succeeded: usize,
    pub failed: usize,
    pub reports: Vec<RunReport>,
    pub failures: Vec<BatchFailure>,
}

/// Loaded models plus configuration; cheap to share across batch workers.
pub struct Engine<T: Scalar> {
    config: AppConfig,
    encoder: Arc<dyn Encoder<T>>,
    segmenter: Option<Arc<dyn ReferringSegmenter>>,
}

impl<T: Scalar> Engine<T> {
    pub fn new(config: AppConfig) -> Result<Self> {
        let encoder = load_backend::<T>(&config.backend)?;
        let segmenter = config
            .segmenter
            .as_ref()
            .map(|s| Arc::new(HttpSegmenter::new(s.endpoint.clone(), s.timeout_secs)) as Arc<dyn ReferringSegmenter>);
        Ok(Self {
            config,
            encoder,
            segmenter,
        })
    }

    pub fn with_encoder(mut self, encoder: Arc<dyn Encoder<T>>) -> Self {
        self.encoder = encoder;
        self
    }

    pub fn with_segmenter(mut self, segmenter: Arc<dyn ReferringSegmenter>) -> Self {
        self.segmenter = Some(segmenter);
        self
    }

    pub fn config(&self) -> &AppConfig {
        &self.config
    }

    /// LLM endpoint when configured, rule-based split otherwise.
    pub fn parse_instruction(&self, instruction: &RawInstruction) -> Result<(ParsedInstruction, ParserKind)> {
        match &self.config.llm {
            Some(endpoint) => {
                let reply = query_llm(endpoint, &build_prompt(instruction))?;
                Ok((parse_llm_response(&reply)?, ParserKind::Llm))
            }
            None => Ok((fallback_split(instruction)?, ParserKind::Fallback)),
        }
    }

    /// Mask file, then the job's shape, then the segmenter, then the
    /// configured synthetic shape.
    pub fn resolve_mask(
        &self,
        manifest: &RunManifest,
        image: &Image<T>,
        objects: &str,
    ) -> Result<(Mask<T>, &'static str)> {
        if let Some(path) = &manifest.mask_path {
            let provider = MaskProvider::File { path: path.clone() };
            return Ok((get_mask(image, objects, &provider)?, provider.kind_name()));
        }
        if let Some(spec) = manifest.mask_shape {
            let provider = MaskProvider::Synthetic(spec);
            return Ok((get_mask(image, objects, &provider)?, provider.kind_name()));
        }
        if let Some(seg) = &self.segmenter {
            return Ok((get_mask_with(image, objects, seg.as_ref())?, "external_model"));
        }
        if let Some(spec) = self.config.synthetic_mask {
            let provider = MaskProvider::Synthetic(spec);
            return Ok((get_mask(image, objects, &provider)?, provider.kind_name()));
        }
        Err(Error::Config(
            "no mask source: pass a mask file, a mask shape, or configure a segmenter".into(),
        ))
    }

    /// Parses, segments, optimizes and writes the PNG plus its report.
    pub fn run(&self, manifest: &RunManifest) -> Result<RunReport> {
        let started = Instant::now();
        let style = apply_style_overrides(&self.config.style, &manifest.overrides)?;
        let instruction = RawInstruction::new(&manifest.instruction)?;
        let content = Image::<T>::load(&manifest.image_path)?;
        let (parsed, parser) = self.parse_instruction(&instruction)?;
        let (mask, provider) = self.resolve_mask(manifest, &content, &parsed.stylized_objects)?;
        log::info!(
            "stylizing {} as {:?} on {:?} ({} iterations)",
            manifest.image_path.display(),
            parsed.stylized_content,
            parsed.stylized_objects,
            style.iterations
        );

        let (stylized, state) = optimize(&content, &parsed, &mask, &style, self.encoder.as_ref())?;
        let ctx = LossContext::new(&content, &mask, &parsed, &style, self.encoder.as_ref())?;
        let mut rng = ChaCha8Rng::seed_from_u64(style.seed);
        let final_loss = ctx.evaluate(&stylized, &mut rng)?.to_f64();

        let output = match self.config.composite {
            CompositeMode::Off => stylized,
            CompositeMode::Soft => composite(&stylized, &content, &mask, false)?,
            CompositeMode::Hard => composite(&stylized, &content, &mask, true)?,
        };
        let output_path = manifest.output_path();
        if let Some(dir) = output_path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        output.save_png(&output_path)?;

        let report_path = report_path_for(&output_path);
        let report = RunReport {
            instruction: instruction.as_str().to_owned(),
            parsed,
            parser,
            mask_provider: provider.to_owned(),
            final_loss,
            loss_history: state.loss_history.iter().map(LossBreakdown::to_f64).collect(),
            iterations: style.iterations,
            seed: style.seed,
            composite: self.config.composite,
            wall_time_secs: started.elapsed().as_secs_f64(),
            output_path,
            report_path: report_path.clone(),
        };
        write_json(&report_path, &report)?;
        Ok(report)
    }

    /// Runs every JSONL line of `path`; one failing job does not stop the rest.
    pub fn run_batch(&self, path: &Path) -> Result<BatchReport> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::InvalidData => Error::Config(format!("batch file {} is not UTF-8", path.display())),
            _ => Error::io(path, e),
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        let lines: Vec<(usize, &str)> = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| (i + 1, l))
            .collect();
        if lines.is_empty() {
            return Err(Error::Config(format!("batch file {} has no jobs", path.display())));
        }
        let parsed: Vec<(usize, Result<RunManifest>)> = lines
            .iter()
            .map(|&(line, raw)| {
                let m = serde_json::from_str::<RunManifest>(raw)
                    .map(|m| m.resolve_relative_to(base))
                    .map_err(|e| Error::Config(format!("line {line}: {e}")));
                (line, m)
            })
            .collect();
        if parsed.iter().all(|(_, m)| m.is_err()) {
            return Err(Error::Config(format!(
                "batch file {} contains no valid manifest",
                path.display()
            )));
        }
        let job = |(line, manifest): &(usize, Result<RunManifest>)| -> (usize, Result<RunReport>) {
            let result = match manifest {
                Ok(m) => self.run(m),
                Err(e) => Err(e.clone()),
            };
            (*line, result)
        };
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.jobs)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        let results: Vec<(usize, Result<RunReport>)> = pool.install(|| {
            use rayon::prelude::*;
            parsed.par_iter().map(job).collect()
        });

        let mut reports = Vec::new();
        let mut failures = Vec::new();
        for (line, result) in results {
            match result {
                Ok(r) => reports.push(r),
                Err(e) => {
                    log::warn!("batch line {line} failed: {e}");
                    failures.push(BatchFailure {
                        line,
                        exit_code: e.exit_code(),
                        error: e.to_string(),
                    });
                }
            }
        }
        Ok(BatchReport {
            total: lines.len(),
            succeeded: reports.len(),
            failed: failures.len(),
            reports,
            failures,
        })
    }
}

pub fn write_json<V: Serialize>(path: &Path, value: &V) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::invalid(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Single job with the default `f32` engine.
pub fn run_stylize(manifest: &RunManifest, config: &AppConfig) -> Result<RunReport> {
    Engine::<f32>::new(config.clone())?.run(manifest)
}

/// Batch run with the default `f32` engine.
pub fn run_batch(path: &Path, config: &AppConfig) -> Result<BatchReport> {
    Engine::<f32>::new(config.clone())?.run_batch(path)
}
