//! The `octsqueeze` command line and the end-to-end codec pipeline it
//! drives.

pub mod container;
pub mod synth;

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::{Deserialize, Serialize};

use crate::codec::{decode_tree, encode_tree};
use crate::entropy::{
    model_cross_entropy, split_corpus, train, Conditioning, DeepEntropyModel, HistogramModel,
    SymbolModel, TrainConfig, TrainingTree, UniformModel,
};
use crate::error::{Error, Result};
use crate::metrics::{chamfer_sym, psnr_sym, squared_distance, voxel_iou, VOXEL_DIMS};
use crate::octree::{Octree, OctreeMode};
use crate::pointcloud::{
    dequantize, fit_quant_params, load_cloud, quantize, quantize_point, CloudFormat, PointCloud, QuantParams,
};

pub use container::{Container, ModelKind};
pub use synth::SceneSpec;

/// A builtin counting model or a trained checkpoint.
#[derive(Debug, Clone)]
pub enum ModelChoice {
    Builtin(ModelKind),
    Deep(Box<DeepEntropyModel>),
}

impl ModelChoice {
    /// `uniform`, `histogram`, `parent-histogram`, or a checkpoint path.
    pub fn parse(spec: &str) -> Result<Self> {
        Ok(match spec {
            "uniform" => ModelChoice::Builtin(ModelKind::Uniform),
            "histogram" => ModelChoice::Builtin(ModelKind::Histogram),
            "parent-histogram" => ModelChoice::Builtin(ModelKind::ParentHistogram),
            path => {
                let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
                ModelChoice::Deep(Box::new(DeepEntropyModel::from_checkpoint(&bytes)?))
            }
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            ModelChoice::Builtin(k) => *k,
            ModelChoice::Deep(_) => ModelKind::Deep,
        }
    }

    pub fn hash(&self) -> u32 {
        match self {
            ModelChoice::Builtin(_) => 0,
            ModelChoice::Deep(m) => m.checksum(),
        }
    }

    /// Builtin histograms start empty and adapt level by level, so a
    /// container needs no side information to decode them.
    pub fn symbol_model(&self) -> Box<dyn SymbolModel + '_> {
        match self {
            ModelChoice::Builtin(ModelKind::Uniform) => Box::new(UniformModel),
            ModelChoice::Builtin(ModelKind::Histogram) => {
                Box::new(HistogramModel::adaptive(Conditioning::None))
            }
            ModelChoice::Builtin(ModelKind::ParentHistogram) => {
                Box::new(HistogramModel::adaptive(Conditioning::ParentOccupancy))
            }
            ModelChoice::Builtin(ModelKind::Deep) => unreachable!("deep models carry a checkpoint"),
            ModelChoice::Deep(m) => Box::new(m.as_ref().clone()),
        }
    }

    fn check_depth(&self, depth: u32) -> Result<()> {
        match self {
            ModelChoice::Deep(m) if depth > m.shape().k_max => Err(Error::validation(format!(
                "depth {depth} exceeds the model's k_max {}",
                m.shape().k_max
            ))),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncodeStats {
    pub points: usize,
    pub symbols: usize,
    pub bytes: usize,
    pub payload_bytes: usize,
    pub leaf_bits: usize,
    /// Σ −log2 q under the model, before table quantization.
    pub model_bits: f64,
    pub seconds: f64,
}

impl EncodeStats {
    /// Whole container bits per input point.
    pub fn bpp(&self) -> f64 {
        (self.bytes * 8) as f64 / self.points as f64
    }

    /// Range-coded payload plus leaf bits, header excluded.
    pub fn payload_bpp(&self) -> f64 {
        (self.payload_bytes * 8 + self.leaf_bits) as f64 / self.points as f64
    }
}

impl fmt::Display for EncodeStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "bpp={:.4} symbols={} bytes={} payload_bpp={:.4} time_s={:.3}",
            self.bpp(),
            self.symbols,
            self.bytes,
            self.payload_bpp(),
            self.seconds
        )
    }
}

#[derive(Debug, Clone)]
pub struct Encoded {
    pub container: Container,
    pub bytes: Vec<u8>,
    pub stats: EncodeStats,
}

/// Codes an already built tree. `params` must describe the tree's lattice.
pub fn encode_octree(
    tree: &Octree,
    params: &QuantParams,
    point_count: usize,
    model: &ModelChoice,
) -> Result<Encoded> {
    let start = Instant::now();
    if point_count == 0 {
        return Err(Error::validation("cannot encode an empty cloud"));
    }
    if params.depth != tree.depth {
        return Err(Error::validation("quantization depth differs from tree depth"));
    }
    model.check_depth(tree.depth)?;
    let point_count_u32 = u32::try_from(point_count)
        .map_err(|_| Error::validation("more than 2^32 - 1 points"))?;
    let enc = encode_tree(tree, model.symbol_model().as_ref())?;
    let container = Container {
        mode: tree.mode,
        model_kind: model.kind(),
        model_hash: model.hash(),
        params: *params,
        point_count: point_count_u32,
        payload: enc.payload,
        leaf_bits: enc.leaf_bits,
    };
    let bytes = container.to_bytes()?;
    let stats = EncodeStats {
        points: point_count,
        symbols: container.payload.symbol_count,
        bytes: bytes.len(),
        payload_bytes: container.payload.bytes.len(),
        leaf_bits: container.leaf_bits.len(),
        model_bits: enc.model_bits,
        seconds: start.elapsed().as_secs_f64(),
    };
    Ok(Encoded {
        container,
        bytes,
        stats,
    })
}

/// quantize → build → predict per level → range-code → container.
pub fn encode_cloud(
    cloud: &PointCloud,
    depth: u32,
    mode: OctreeMode,
    model: &ModelChoice,
) -> Result<Encoded> {
    cloud.validate()?;
    model.check_depth(depth)?;
    let params = fit_quant_params(cloud, depth)?;
    let tree = Octree::build(&quantize(cloud, &params), mode)?;
    encode_octree(&tree, &params, cloud.len(), model)
}

/// Inverse of [`encode_cloud`]; returns cell centers in BFS order.
pub fn decode_container(container: &Container, model: &ModelChoice) -> Result<PointCloud> {
    if model.kind() != container.model_kind {
        return Err(Error::validation(format!(
            "container was coded with the {} model, got {}",
            container.model_kind.name(),
            model.kind().name()
        )));
    }
    if model.hash() != container.model_hash {
        return Err(Error::ModelMismatch {
            expected: container.model_hash,
            actual: model.hash(),
        });
    }
    model.check_depth(container.params.depth)?;
    let tree = decode_tree(
        &container.payload,
        &container.leaf_bits,
        container.params.depth,
        container.mode,
        model.symbol_model().as_ref(),
    )?;
    let qc = tree.reconstruct(&container.params);
    if qc.len() > container.point_count as usize {
        return Err(Error::corruption(format!(
            "decoded {} points but the header records {}",
            qc.len(),
            container.point_count
        )));
    }
    Ok(dequantize(&qc))
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Cloud files of a corpus directory (`.xyz`, `.txt`, `.bin`), sorted.
pub fn corpus_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && matches!(
                    p.extension().and_then(|e| e.to_str()),
                    Some("xyz" | "txt" | "bin")
                )
        })
        .collect();
    files.sort();
    Ok(files)
}

fn load(path: &Path) -> Result<PointCloud> {
    load_cloud(path, CloudFormat::from_path(path))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Full,
    Early,
}

impl From<ModeArg> for OctreeMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Full => OctreeMode::FullSubdivision,
            ModeArg::Early => OctreeMode::EarlyTermination,
        }
    }
}

/// JSON configuration; any flag given on the command line takes precedence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub depth: Option<u32>,
    pub mode: Option<ModeArg>,
    pub model: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub count: Option<usize>,
    pub depths: Option<Vec<u32>>,
    pub loss_csv: Option<PathBuf>,
    pub train: Option<TrainConfig>,
    pub scene: Option<SceneSpec>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            location: format!("{}:{}:{}", path.display(), e.line(), e.column()),
            message: e.to_string(),
        })
    }
}

#[derive(Debug, Parser)]
#[command(name = "octsqueeze", version, about = "Octree point-cloud codec with learned entropy models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Octree depth k.
    #[arg(long, global = true)]
    pub depth: Option<u32>,
    #[arg(long, global = true, value_enum)]
    pub mode: Option<ModeArg>,
    /// uniform | histogram | parent-histogram | <checkpoint path>
    #[arg(long, global = true)]
    pub model: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON file supplying defaults for any flag.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic scenes into the `--out` directory.
    Synth {
        #[arg(long)]
        count: Option<usize>,
        /// Points per scene.
        #[arg(long)]
        points: Option<usize>,
    },
    /// Train a deep entropy model on a directory of clouds.
    Train {
        corpus: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
        /// Loss curve CSV; defaults to the checkpoint path with `.csv`.
        #[arg(long)]
        loss_csv: Option<PathBuf>,
    },
    /// Compress one cloud into a container.
    Encode { input: PathBuf },
    /// Restore a cloud (xyz text) from a container.
    Decode { input: PathBuf },
    /// Quality metrics for `original reconstructed` file pairs.
    Eval {
        #[arg(num_args = 2.., required = true)]
        files: Vec<PathBuf>,
    },
    /// Rate/distortion over several truncation depths for every scene.
    RdCurve {
        corpus: PathBuf,
        /// Comma-separated depths, e.g. `6,7,8`.
        #[arg(long, value_delimiter = ',')]
        depths: Option<Vec<u32>>,
    },
}

/// Flags merged over the config file.
struct Settings {
    file: FileConfig,
    depth: Option<u32>,
    mode: OctreeMode,
    model: Option<String>,
    seed: Option<u64>,
    out: Option<PathBuf>,
}

impl Settings {
    fn new(common: &CommonArgs) -> Result<Self> {
        let file = match &common.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        Ok(Settings {
            depth: common.depth.or(file.depth),
            mode: common.mode.or(file.mode).unwrap_or(ModeArg::Full).into(),
            model: common.model.clone().or_else(|| file.model.clone()),
            seed: common.seed.or(file.seed),
            out: common.out.clone().or_else(|| file.out.clone()),
            file,
        })
    }

    fn out(&self) -> Result<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| Error::validation("--out is required"))
    }
}

pub const DEFAULT_DEPTH: u32 = 12;
pub const DEFAULT_MODEL: &str = "parent-histogram";
pub const DEFAULT_RD_DEPTHS: [u32; 7] = [6, 7, 8, 9, 10, 11, 12];

/// Runs one subcommand; report lines go to `out`.
pub fn run(cli: &Cli, out: &mut dyn std::io::Write) -> Result<()> {
    let s = Settings::new(&cli.common)?;
    let say = |out: &mut dyn std::io::Write, line: String| {
        writeln!(out, "{line}").map_err(|e| Error::io("<stdout>", e))
    };
    match &cli.command {
        Command::Synth { count, points } => {
            let mut spec = s.file.scene.clone().unwrap_or_default();
            if let Some(seed) = s.seed {
                spec.seed = seed;
            }
            if let Some(p) = points {
                spec.points = *p;
            }
            let count = count.or(s.file.count).unwrap_or(1);
            let dir = s.out()?;
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            for i in 0..count {
                let scene = spec.with_seed(spec.seed.wrapping_add(i as u64));
                let cloud = scene.generate()?;
                let path = dir.join(format!("scene_{i:04}.xyz"));
                write_atomic(&path, cloud.to_xyz_text().as_bytes())?;
                say(out, format!("{} points={}", path.display(), cloud.len()))?;
            }
        }
        Command::Train {
            corpus,
            steps,
            loss_csv,
        } => {
            let mut config = s.file.train.clone().unwrap_or_default();
            if let Some(d) = s.depth {
                config.k_max = d;
            }
            if let Some(seed) = s.seed {
                config.seed = seed;
            }
            if let Some(n) = steps {
                config.steps = *n;
            }
            let ckpt_path = s.out()?.to_path_buf();
            let csv_path = loss_csv
                .clone()
                .or_else(|| s.file.loss_csv.clone())
                .unwrap_or_else(|| ckpt_path.with_extension("csv"));
            let report = train_corpus(&config, corpus, s.mode)?;
            write_atomic(&ckpt_path, &report.model.to_checkpoint())?;
            write_atomic(&csv_path, &report.loss_csv()?)?;
            say(
                out,
                format!(
                    "checkpoint={} hash={:#010x} val_bits_per_symbol={:.4} parent_histogram_bits_per_symbol={:.4}",
                    ckpt_path.display(),
                    report.model.checksum(),
                    report.val_bits_per_symbol,
                    report.baseline_bits_per_symbol
                ),
            )?;
        }
        Command::Encode { input } => {
            let model = ModelChoice::parse(s.model.as_deref().unwrap_or(DEFAULT_MODEL))?;
            let cloud = load(input)?;
            let enc = encode_cloud(&cloud, s.depth.unwrap_or(DEFAULT_DEPTH), s.mode, &model)?;
            write_atomic(s.out()?, &enc.bytes)?;
            say(out, enc.stats.to_string())?;
        }
        Command::Decode { input } => {
            let bytes = fs::read(input).map_err(|e| Error::io(input, e))?;
            let container = Container::from_bytes(&bytes)?;
            let model = match (&s.model, container.model_kind) {
                (Some(m), _) => ModelChoice::parse(m)?,
                (None, ModelKind::Deep) => {
                    return Err(Error::validation("container needs a checkpoint: pass --model"))
                }
                (None, kind) => ModelChoice::Builtin(kind),
            };
            let cloud = decode_container(&container, &model)?;
            write_atomic(s.out()?, cloud.to_xyz_text().as_bytes())?;
            say(out, format!("points={}", cloud.len()))?;
        }
        Command::Eval { files } => {
            let report = eval_pairs(files)?;
            for (i, r) in report.iter().enumerate() {
                say(
                    out,
                    format!("pair={i} chamfer={} psnr={} iou={}", r.chamfer, r.psnr, r.iou),
                )?;
            }
            if let Some(path) = &s.out {
                let json = serde_json::to_vec_pretty(&report)
                    .map_err(|e| Error::validation(format!("json: {e}")))?;
                write_atomic(path, &json)?;
            }
        }
        Command::RdCurve { corpus, depths } => {
            let depths = depths
                .clone()
                .or_else(|| s.file.depths.clone())
                .unwrap_or_else(|| DEFAULT_RD_DEPTHS.to_vec());
            let model = ModelChoice::parse(s.model.as_deref().unwrap_or(DEFAULT_MODEL))?;
            let files = corpus_files(corpus)?;
            if files.is_empty() {
                return Err(Error::validation(format!("no clouds in {}", corpus.display())));
            }
            let mut rows = Vec::new();
            for f in &files {
                let cloud = load(f)?;
                let name = f.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
                rows.extend(rd_curve(&name, &cloud, &depths, s.mode, &model)?);
            }
            write_atomic(s.out()?, &rd_csv(&rows)?)?;
            say(out, format!("rows={}", rows.len()))?;
        }
    }
    Ok(())
}

/// Result of training on a corpus directory.
pub struct TrainReport {
    pub model: DeepEntropyModel,
    pub curve: Vec<crate::entropy::CurvePoint>,
    pub val_bits_per_symbol: f64,
    /// Parent-conditioned histogram fitted on the training split.
    pub baseline_bits_per_symbol: f64,
}

impl TrainReport {
    pub fn loss_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let wrap = |e: csv::Error| Error::validation(format!("csv: {e}"));
        w.write_record(["step", "train_nats", "val_bits_per_symbol"]).map_err(wrap)?;
        for c in &self.curve {
            w.write_record([
                c.step.to_string(),
                format!("{:.6}", c.train_nats),
                c.val_bits_per_symbol.map(|v| format!("{v:.6}")).unwrap_or_default(),
            ])
            .map_err(wrap)?;
        }
        w.into_inner().map_err(|e| Error::validation(format!("csv: {e}")))
    }
}

/// Static-histogram cross-entropy of `val` after counting `train`.
pub fn histogram_bits_per_symbol(train: &[Octree], val: &[Octree], cond: Conditioning) -> Result<f64> {
    let model = HistogramModel::fit(train, cond);
    let (mut bits, mut symbols) = (0.0, 0);
    for t in val {
        let ce = model_cross_entropy(&model, t, 1)?;
        bits += ce.symbol_bits;
        symbols += ce.symbols;
    }
    Ok(bits / symbols.max(1) as f64)
}

pub fn train_on_clouds(config: &TrainConfig, clouds: &[PointCloud], mode: OctreeMode) -> Result<TrainReport> {
    config.validate()?;
    let trees = clouds
        .iter()
        .map(|c| {
            let params = fit_quant_params(c, config.k_max)?;
            Ok((Octree::build(&quantize(c, &params), mode)?, c.len()))
        })
        .collect::<Result<Vec<_>>>()?;
    let (train_trees, val_trees) = split_corpus(trees, config.validation_fraction)?;
    let prep = |set: &[(Octree, usize)]| -> Result<Vec<TrainingTree>> {
        set.iter()
            .map(|(t, n)| TrainingTree::new(t, config.features, config.k_max, *n))
            .collect()
    };
    let outcome = train(config, &prep(&train_trees)?, &prep(&val_trees)?)?;
    let strip = |set: &[(Octree, usize)]| set.iter().map(|(t, _)| t.clone()).collect::<Vec<_>>();
    let baseline = histogram_bits_per_symbol(&strip(&train_trees), &strip(&val_trees), Conditioning::ParentOccupancy)?;
    let val = outcome
        .final_val_bits()
        .ok_or_else(|| Error::validation("no validation score recorded"))?;
    info!("validation {val:.4} bits/symbol, parent histogram {baseline:.4}");
    Ok(TrainReport {
        model: outcome.model,
        curve: outcome.curve,
        val_bits_per_symbol: val,
        baseline_bits_per_symbol: baseline,
    })
}

pub fn train_corpus(config: &TrainConfig, corpus: &Path, mode: OctreeMode) -> Result<TrainReport> {
    let files = corpus_files(corpus)?;
    if files.len() < 2 {
        return Err(Error::validation(format!(
            "training needs at least 2 scenes, found {} in {}",
            files.len(),
            corpus.display()
        )));
    }
    let clouds = files.iter().map(|f| load(f)).collect::<Result<Vec<_>>>()?;
    train_on_clouds(config, &clouds, mode)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QualityReport {
    pub chamfer: f64,
    /// `f64::INFINITY` when the point-to-plane error vanishes.
    pub psnr: f64,
    pub iou: f64,
}

/// Metrics with the voxel grid anchored at `anchor`. PSNR is NaN when a
/// cloud has too few points for normals.
pub fn quality(original: &PointCloud, decoded: &PointCloud, anchor: [f64; 3]) -> Result<QualityReport> {
    Ok(QualityReport {
        chamfer: chamfer_sym(original, decoded)?,
        psnr: psnr_sym(original, decoded).unwrap_or(f64::NAN),
        iou: voxel_iou(original, decoded, VOXEL_DIMS, anchor)?,
    })
}

pub fn eval_pairs(files: &[PathBuf]) -> Result<Vec<QualityReport>> {
    if files.len() % 2 != 0 {
        return Err(Error::validation("eval expects original/reconstructed pairs"));
    }
    files
        .chunks(2)
        .map(|pair| {
            let (fa, fb) = (CloudFormat::from_path(&pair[0]), CloudFormat::from_path(&pair[1]));
            if fa != fb {
                return Err(Error::validation(format!(
                    "{} and {} have different formats",
                    pair[0].display(),
                    pair[1].display()
                )));
            }
            let a = load(&pair[0])?;
            let b = load(&pair[1])?;
            let anchor = a.points.iter().fold([f64::INFINITY; 3], |m, p| {
                [m[0].min(p[0]), m[1].min(p[1]), m[2].min(p[2])]
            });
            quality(&a, &b, anchor)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RdRow {
    pub scene: String,
    pub depth: u32,
    pub bpp: f64,
    pub payload_bpp: f64,
    pub quality: QualityReport,
    /// Largest distance from an input point to its reconstructed cell center.
    pub max_error: f64,
    /// Cell size at the deepest requested depth.
    pub base_cell: f64,
}

/// Builds the tree once at the deepest requested depth, then truncates,
/// encodes, decodes and scores every depth.
pub fn rd_curve(
    scene: &str,
    cloud: &PointCloud,
    depths: &[u32],
    mode: OctreeMode,
    model: &ModelChoice,
) -> Result<Vec<RdRow>> {
    let &k = depths
        .iter()
        .max()
        .ok_or_else(|| Error::validation("no depths requested"))?;
    cloud.validate()?;
    let params = fit_quant_params(cloud, k)?;
    let full = Octree::build(&quantize(cloud, &params), mode)?;
    depths
        .iter()
        .map(|&d| {
            let tree = full.truncate(d)?;
            let coarse = params.coarsened(d);
            let enc = encode_octree(&tree, &coarse, cloud.len(), model)?;
            let back = Container::from_bytes(&enc.bytes)?;
            let decoded = decode_container(&back, model)?;
            let max_error = max_point_error(cloud, &coarse);
            Ok(RdRow {
                scene: scene.to_string(),
                depth: d,
                bpp: enc.stats.bpp(),
                payload_bpp: enc.stats.payload_bpp(),
                quality: quality(cloud, &decoded, params.origin)?,
                max_error,
                base_cell: params.cell,
            })
        })
        .collect()
}

/// Distance from each input point to the center of its own cell.
pub fn max_point_error(cloud: &PointCloud, params: &QuantParams) -> f64 {
    cloud
        .points
        .iter()
        .map(|p| squared_distance(p, &params.cell_center(quantize_point(p, params))).sqrt())
        .fold(0.0, f64::max)
}

pub fn rd_csv(rows: &[RdRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let wrap = |e: csv::Error| Error::validation(format!("csv: {e}"));
    w.write_record(["scene", "depth", "bpp", "payload_bpp", "chamfer", "psnr", "iou"])
        .map_err(wrap)?;
    for r in rows {
        w.write_record([
            r.scene.clone(),
            r.depth.to_string(),
            format!("{:.6}", r.bpp),
            format!("{:.6}", r.payload_bpp),
            format!("{:.9}", r.quality.chamfer),
            format!("{:.6}", r.quality.psnr),
            format!("{:.6}", r.quality.iou),
        ])
        .map_err(wrap)?;
    }
    w.into_inner().map_err(|e| Error::validation(format!("csv: {e}")))
}
