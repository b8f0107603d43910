//! Reproducible workflows: data generation, training with checkpoints and
//! resume, evaluation, single-image description, and the property-check
//! suites. Every run directory receives the exact resolved configuration.

use crate::autodiff::{grad_check, load_tensors, save_tensors, SgdState, TensorData};
use crate::data::{
    self, generate_dataset, load_manifest, manifest_path, mix_seed, vocab_path, DatasetRecord,
    GenConfig, Split, SplitCounts, Vocab,
};
use crate::error::{Error, Result};
use crate::exec;
use crate::expr::{sample_equation, Category};
use crate::layout::EqImage;
use crate::metrics::{self, tokenize_sentence, EvalReport, Sentence};
use crate::model::{
    beam_decode, greedy_decode, init_params, train_step, Batch, CellKind, Hyper, ModelConfig,
    Params,
};
use crate::parse::parse_description;
use crate::verbalize::verbalize;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

/// Flat key=value run configuration; one committed file reproduces a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train_count: usize,
    pub val_count: usize,
    pub test_count: usize,
    pub data_seed: u64,
    pub depth_budget: usize,
    pub img_height: usize,
    pub img_width: usize,
    pub style_size: u32,
    pub enc_channels: Vec<usize>,
    pub feature_dim: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub attn_dim: usize,
    pub cell: CellKind,
    pub use_attention: bool,
    pub freeze_encoder: bool,
    pub dropout: f64,
    pub t_max: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub clip_norm: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub train_seed: u64,
    pub min_count: usize,
    pub beam: usize,
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        RunConfig {
            train_count: 2000,
            val_count: 250,
            test_count: 250,
            data_seed: 17,
            depth_budget: 4,
            img_height: 64,
            img_width: 256,
            style_size: 12,
            enc_channels: vec![16, 32, 64],
            feature_dim: 32,
            embed_dim: 48,
            hidden_dim: 96,
            attn_dim: 48,
            cell: CellKind::Lstm,
            use_attention: true,
            freeze_encoder: false,
            dropout: 0.1,
            t_max: 40,
            lr: 0.3,
            momentum: 0.9,
            weight_decay: 1e-4,
            clip_norm: 5.0,
            batch_size: 50,
            epochs: 60,
            train_seed: 23,
            min_count: 4,
            beam: 20,
        }
    }
}

fn bad_config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad_config(format!("line {}: expected key=value", lineno + 1)))?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        RunConfig::parse(&std::fs::read_to_string(path)?)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| bad_config(format!("{key}: cannot parse '{v}'")))
        }
        match key {
            "train_count" => self.train_count = num(key, value)?,
            "val_count" => self.val_count = num(key, value)?,
            "test_count" => self.test_count = num(key, value)?,
            "data_seed" => self.data_seed = num(key, value)?,
            "depth_budget" => self.depth_budget = num(key, value)?,
            "img_height" => self.img_height = num(key, value)?,
            "img_width" => self.img_width = num(key, value)?,
            "style_size" => self.style_size = num(key, value)?,
            "enc_channels" => {
                self.enc_channels = value
                    .split(',')
                    .map(|p| num("enc_channels", p.trim()))
                    .collect::<Result<_>>()?;
            }
            "feature_dim" => self.feature_dim = num(key, value)?,
            "embed_dim" => self.embed_dim = num(key, value)?,
            "hidden_dim" => self.hidden_dim = num(key, value)?,
            "attn_dim" => self.attn_dim = num(key, value)?,
            "cell" => {
                self.cell = CellKind::from_str(value)
                    .ok_or_else(|| bad_config(format!("cell: unknown kind '{value}'")))?;
            }
            "use_attention" => self.use_attention = num(key, value)?,
            "freeze_encoder" => self.freeze_encoder = num(key, value)?,
            "dropout" => self.dropout = num(key, value)?,
            "t_max" => self.t_max = num(key, value)?,
            "lr" => self.lr = num(key, value)?,
            "momentum" => self.momentum = num(key, value)?,
            "weight_decay" => self.weight_decay = num(key, value)?,
            "clip_norm" => self.clip_norm = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "train_seed" => self.train_seed = num(key, value)?,
            "min_count" => self.min_count = num(key, value)?,
            "beam" => self.beam = num(key, value)?,
            other => return Err(bad_config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    pub fn apply_overrides(&mut self, overrides: &[(String, String)]) -> Result<()> {
        for (k, v) in overrides {
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let channels = self
            .enc_channels
            .iter()
            .map(|c| c.to_string())
            .collect::<Vec<_>>()
            .join(",");
        format!(
            "train_count={}\nval_count={}\ntest_count={}\ndata_seed={}\ndepth_budget={}\n\
             img_height={}\nimg_width={}\nstyle_size={}\nenc_channels={}\nfeature_dim={}\n\
             embed_dim={}\nhidden_dim={}\nattn_dim={}\ncell={}\nuse_attention={}\n\
             freeze_encoder={}\ndropout={}\nt_max={}\nlr={}\nmomentum={}\nweight_decay={}\n\
             clip_norm={}\nbatch_size={}\nepochs={}\ntrain_seed={}\nmin_count={}\nbeam={}\n",
            self.train_count,
            self.val_count,
            self.test_count,
            self.data_seed,
            self.depth_budget,
            self.img_height,
            self.img_width,
            self.style_size,
            channels,
            self.feature_dim,
            self.embed_dim,
            self.hidden_dim,
            self.attn_dim,
            self.cell.as_str(),
            self.use_attention,
            self.freeze_encoder,
            self.dropout,
            self.t_max,
            self.lr,
            self.momentum,
            self.weight_decay,
            self.clip_norm,
            self.batch_size,
            self.epochs,
            self.train_seed,
            self.min_count,
            self.beam,
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn gen_config(&self) -> GenConfig {
        GenConfig {
            train: SplitCounts::proportional(self.train_count),
            val: SplitCounts::proportional(self.val_count),
            test: SplitCounts::proportional(self.test_count),
            master_seed: self.data_seed,
            depth_budget: self.depth_budget,
            img_h: self.img_height as u32,
            img_w: self.img_width as u32,
            style_size: self.style_size,
        }
    }

    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            img_h: self.img_height,
            img_w: self.img_width,
            enc_channels: self.enc_channels.clone(),
            feature_dim: self.feature_dim,
            embed_dim: self.embed_dim,
            hidden_dim: self.hidden_dim,
            attn_dim: self.attn_dim,
            vocab_size,
            t_max: self.t_max,
            cell: self.cell,
            use_attention: self.use_attention,
            freeze_encoder: self.freeze_encoder,
            dropout: self.dropout,
        }
    }

    pub fn hyper(&self) -> Hyper {
        Hyper {
            lr: self.lr,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            clip_norm: self.clip_norm,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenSummary {
    pub records: usize,
    pub vocab_size: usize,
}

/// Generate the corpus and its vocabulary into `out`.
pub fn gen_data(cfg: &RunConfig, out: &Path, seed_override: Option<u64>) -> Result<GenSummary> {
    let mut cfg = cfg.clone();
    if let Some(seed) = seed_override {
        cfg.data_seed = seed;
    }
    std::fs::create_dir_all(out)?;
    let records = generate_dataset(&cfg.gen_config(), out)?;
    let vocab = Vocab::build(
        records
            .iter()
            .filter(|r| r.split == Split::Train)
            .map(|r| r.description.as_str()),
        cfg.min_count,
    )?;
    vocab.save(&vocab_path(out))?;
    cfg.save(&out.join("config.txt"))?;
    Ok(GenSummary {
        records: records.len(),
        vocab_size: vocab.size(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_bleu4: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_bleu4: f64,
}

const OPT_PREFIX: &str = "opt.v.";

fn save_checkpoint(
    path: &Path,
    params: &Params<f32>,
    opt: &SgdState<f32>,
    meta: &BTreeMap<String, String>,
) -> Result<()> {
    let mut tensors: Params<f32> = params.clone();
    for (name, v) in &opt.velocity {
        tensors.insert(
            format!("{OPT_PREFIX}{name}"),
            TensorData {
                shape: vec![v.len()],
                data: v.clone(),
            },
        );
    }
    save_tensors(path, &tensors)?;
    let mut text = String::new();
    for (k, v) in meta {
        text.push_str(&format!("{k}={v}\n"));
    }
    std::fs::write(path.with_extension("meta"), text)?;
    Ok(())
}

fn load_checkpoint(path: &Path) -> Result<(Params<f32>, SgdState<f32>, BTreeMap<String, String>)> {
    let tensors = load_tensors::<f32>(path)?;
    let mut params = BTreeMap::new();
    let mut opt = SgdState::new();
    for (name, t) in tensors {
        if let Some(stripped) = name.strip_prefix(OPT_PREFIX) {
            opt.velocity.insert(stripped.to_owned(), t.data);
        } else {
            params.insert(name, t);
        }
    }
    let meta_path = path.with_extension("meta");
    let mut meta = BTreeMap::new();
    if meta_path.exists() {
        for line in std::fs::read_to_string(&meta_path)?.lines() {
            if let Some((k, v)) = line.split_once('=') {
                meta.insert(k.to_owned(), v.to_owned());
            }
        }
    }
    Ok((params, opt, meta))
}

struct LoadedData {
    train: Vec<(EqImage, Vec<u32>, String)>,
    val: Vec<(EqImage, String)>,
    vocab: Vocab,
}

fn load_training_data(data_dir: &Path, min_count_check: usize) -> Result<LoadedData> {
    let records = load_manifest(&manifest_path(data_dir))?;
    let vocab = Vocab::load(&vocab_path(data_dir))?;
    let _ = min_count_check;
    let mut train = Vec::new();
    let mut val = Vec::new();
    for r in &records {
        match r.split {
            Split::Train => {
                let img = EqImage::read_pgm(&data_dir.join(&r.image))?;
                train.push((img, vocab.encode(&r.description), r.description.clone()));
            }
            Split::Val => {
                let img = EqImage::read_pgm(&data_dir.join(&r.image))?;
                val.push((img, r.description.clone()));
            }
            Split::Test => {}
        }
    }
    if train.is_empty() {
        return Err(Error::Data("no training records in manifest".to_owned()));
    }
    Ok(LoadedData { train, val, vocab })
}

/// Greedy-decode a split and return corpus BLEU-4 against the references.
fn corpus_bleu4_greedy(
    params: &Params<f32>,
    mcfg: &ModelConfig,
    vocab: &Vocab,
    items: &[(EqImage, String)],
) -> Result<f64> {
    if items.is_empty() {
        return Ok(0.0);
    }
    let decoded: Vec<std::result::Result<Vec<u32>, crate::autodiff::TensorError>> =
        exec::map_indexed(items.len(), |i| {
            greedy_decode(params, mcfg, &items[i].0, mcfg.t_max)
        });
    let mut cands: Vec<Sentence> = Vec::with_capacity(items.len());
    let mut refs: Vec<Vec<Sentence>> = Vec::with_capacity(items.len());
    for (out, (_, reference)) in decoded.into_iter().zip(items) {
        let ids = out?;
        cands.push(tokenize_sentence(&vocab.decode_words(&ids)));
        refs.push(vec![tokenize_sentence(reference)]);
    }
    metrics::bleu(&cands, &refs, 4)
}

/// Train on `data_dir`, logging per-epoch loss and validation BLEU-4, keeping
/// the best checkpoint by validation BLEU-4 and the last one for resuming.
pub fn train(
    data_dir: &Path,
    cfg: &RunConfig,
    out_dir: &Path,
    resume: Option<&Path>,
) -> Result<TrainSummary> {
    train_with_progress(data_dir, cfg, out_dir, resume, |_| {})
}

/// [`train`] with a per-epoch observer (progress reporting).
pub fn train_with_progress(
    data_dir: &Path,
    cfg: &RunConfig,
    out_dir: &Path,
    resume: Option<&Path>,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainSummary> {
    std::fs::create_dir_all(out_dir)?;
    let data = load_training_data(data_dir, cfg.min_count)?;
    let mcfg = cfg.model_config(data.vocab.size());
    mcfg.validate().map_err(Error::Tensor)?;

    let mut params: Params<f32>;
    let mut opt: SgdState<f32>;
    let mut start_epoch = 0usize;
    let mut best_bleu = f64::NEG_INFINITY;
    let mut best_epoch = 0usize;
    if let Some(ckpt) = resume {
        let (p, o, meta) = load_checkpoint(ckpt)?;
        let expected = mcfg.param_shapes();
        for (name, shape) in &expected {
            match p.get(name) {
                Some(t) if &t.shape == shape => {}
                Some(t) => {
                    return Err(bad_config(format!(
                        "checkpoint tensor {name} has shape {:?}, config wants {shape:?}",
                        t.shape
                    )))
                }
                None => return Err(bad_config(format!("checkpoint is missing tensor {name}"))),
            }
        }
        start_epoch = meta
            .get("epochs_done")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad_config("resume checkpoint lacks epochs_done"))?;
        if let Some(bits) = meta.get("best_val_bleu4_bits").and_then(|v| v.parse().ok()) {
            best_bleu = f64::from_bits(bits);
        }
        if let Some(e) = meta.get("best_epoch").and_then(|v| v.parse().ok()) {
            best_epoch = e;
        }
        params = p;
        opt = o;
    } else {
        params = init_params(&mcfg, cfg.train_seed);
        opt = SgdState::new();
    }

    cfg.save(&out_dir.join("config.txt"))?;
    data.vocab.save(&out_dir.join("vocab.tsv"))?;
    let log_path = out_dir.join("train_log.jsonl");
    let mut log = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&log_path)?;

    let hyper = cfg.hyper();
    let n_train = data.train.len();
    for epoch in start_epoch..cfg.epochs {
        let mut order: Vec<usize> = (0..n_train).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.train_seed, epoch as u64));
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0f64;
        let mut n_batches = 0usize;
        for (batch_idx, chunk) in order.chunks(cfg.batch_size.max(1)).enumerate() {
            let batch = Batch::new(
                chunk
                    .iter()
                    .map(|&i| (data.train[i].0.clone(), data.train[i].1.clone()))
                    .collect(),
            );
            let step_seed = mix_seed(cfg.train_seed, mix_seed(epoch as u64, batch_idx as u64));
            loss_sum += train_step(&mut params, &mut opt, &mcfg, &batch, &hyper, step_seed)?;
            n_batches += 1;
        }
        let train_loss = loss_sum / n_batches as f64;
        let val_bleu4 = corpus_bleu4_greedy(&params, &mcfg, &data.vocab, &data.val)?;

        let line = EpochLog {
            epoch,
            train_loss,
            val_bleu4,
        };
        serde_json::to_writer(&mut log, &line)?;
        log.write_all(b"\n")?;
        log.flush()?;
        on_epoch(&line);

        if val_bleu4 > best_bleu {
            best_bleu = val_bleu4;
            best_epoch = epoch;
            let meta = train_meta(epoch + 1, best_epoch, best_bleu);
            save_checkpoint(&out_dir.join("best.ckpt"), &params, &opt, &meta)?;
        }
        let meta = train_meta(epoch + 1, best_epoch, best_bleu);
        save_checkpoint(&out_dir.join("last.ckpt"), &params, &opt, &meta)?;
    }
    Ok(TrainSummary {
        epochs_run: cfg.epochs.saturating_sub(start_epoch),
        best_epoch,
        best_val_bleu4: best_bleu,
    })
}

fn train_meta(epochs_done: usize, best_epoch: usize, best_bleu: f64) -> BTreeMap<String, String> {
    let mut meta = BTreeMap::new();
    meta.insert("epochs_done".to_owned(), epochs_done.to_string());
    meta.insert("best_epoch".to_owned(), best_epoch.to_string());
    meta.insert(
        "best_val_bleu4_bits".to_owned(),
        best_bleu.to_bits().to_string(),
    );
    meta.insert("best_val_bleu4".to_owned(), format!("{best_bleu}"));
    meta
}

pub fn read_train_log(path: &Path) -> Result<Vec<EpochLog>> {
    let f = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

/// Load a checkpoint with its config and vocabulary sidecars.
pub fn load_model(ckpt: &Path) -> Result<(RunConfig, ModelConfig, Params<f32>, Vocab)> {
    let dir = ckpt
        .parent()
        .ok_or_else(|| bad_config("checkpoint has no parent directory"))?;
    let (params, _opt, _meta) = load_checkpoint(ckpt)?;
    let rcfg = RunConfig::load(&dir.join("config.txt"))?;
    let vocab = Vocab::load(&dir.join("vocab.tsv"))?;
    let mcfg = rcfg.model_config(vocab.size());
    mcfg.validate().map_err(Error::Tensor)?;
    Ok((rcfg, mcfg, params, vocab))
}

/// Decode a whole split with beam search and score it.
pub fn eval(
    data_dir: &Path,
    split: Split,
    ckpt: &Path,
    beam: usize,
    report_out: Option<&Path>,
) -> Result<EvalReport> {
    let (_rcfg, mcfg, params, vocab) = load_model(ckpt)?;
    let records: Vec<DatasetRecord> = load_manifest(&manifest_path(data_dir))?
        .into_iter()
        .filter(|r| r.split == split)
        .collect();
    if records.is_empty() {
        return Err(Error::Data(format!("no records in split {split}")));
    }
    let images: Vec<EqImage> = records
        .iter()
        .map(|r| EqImage::read_pgm(&data_dir.join(&r.image)))
        .collect::<Result<_>>()?;
    let decoded: Vec<std::result::Result<Vec<u32>, crate::autodiff::TensorError>> =
        exec::map_indexed(records.len(), |i| {
            if beam <= 1 {
                greedy_decode(&params, &mcfg, &images[i], mcfg.t_max)
            } else {
                beam_decode(&params, &mcfg, &images[i], beam, mcfg.t_max).map(|(ids, _)| ids)
            }
        });
    let mut ids = Vec::with_capacity(records.len());
    let mut cands: Vec<Sentence> = Vec::with_capacity(records.len());
    let mut refs: Vec<Sentence> = Vec::with_capacity(records.len());
    for (out, r) in decoded.into_iter().zip(&records) {
        ids.push(r.id);
        cands.push(tokenize_sentence(&vocab.decode_words(&out?)));
        refs.push(tokenize_sentence(&r.description));
    }
    let report = EvalReport::compute(&ids, &cands, &refs)?;
    if let Some(path) = report_out {
        report.write_jsonl(path)?;
    }
    Ok(report)
}

/// Describe one PGM image with the given checkpoint.
pub fn describe(image: &Path, ckpt: &Path, beam: usize) -> Result<String> {
    let (_rcfg, mcfg, params, vocab) = load_model(ckpt)?;
    let img = EqImage::read_pgm(image)?;
    if (img.height as usize, img.width as usize) != (mcfg.img_h, mcfg.img_w) {
        return Err(Error::Image(format!(
            "image is {}x{}, model expects {}x{}",
            img.height, img.width, mcfg.img_h, mcfg.img_w
        )));
    }
    let ids = if beam <= 1 {
        greedy_decode(&params, &mcfg, &img, mcfg.t_max)?
    } else {
        beam_decode(&params, &mcfg, &img, beam, mcfg.t_max)?.0
    };
    Ok(vocab.decode_words(&ids))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Roundtrip,
    Grad,
    Metrics,
}

impl Suite {
    pub fn from_str(s: &str) -> Option<Suite> {
        match s {
            "roundtrip" => Some(Suite::Roundtrip),
            "grad" => Some(Suite::Grad),
            "metrics" => Some(Suite::Metrics),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CheckLine {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default)]
pub struct CheckReport {
    pub lines: Vec<CheckLine>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.lines.iter().all(|l| l.passed)
    }

    fn push(&mut self, name: &str, passed: bool, detail: String) {
        self.lines.push(CheckLine {
            name: name.to_owned(),
            passed,
            detail,
        });
    }
}

/// Run one property suite.
pub fn check(suite: Suite) -> CheckReport {
    match suite {
        Suite::Roundtrip => roundtrip_suite(|text| text),
        Suite::Grad => grad_suite(),
        Suite::Metrics => metrics_suite(),
    }
}

/// Round-trip over 10,000 seeded equations across all categories. The
/// `mutate` hook lets tests corrupt the emitted text and watch the suite
/// catch it with a counterexample.
pub(crate) fn roundtrip_suite(mutate: impl Fn(String) -> String) -> CheckReport {
    let mut report = CheckReport::default();
    let mut failures = 0usize;
    let mut first_counterexample = String::new();
    let total = 10_000u64;
    for seed in 0..total {
        let cat = Category::ALL[(seed % 7) as usize];
        let e = sample_equation(cat, &mut ChaCha8Rng::seed_from_u64(seed), 4);
        let text = mutate(verbalize(&e).text);
        let ok = matches!(parse_description(&text), Ok(back) if back == e);
        if !ok {
            failures += 1;
            if first_counterexample.is_empty() {
                first_counterexample = format!(
                    "seed {seed}: '{text}' does not round-trip to {}",
                    crate::expr::to_canonical_string(&e)
                );
            }
        }
    }
    report.push(
        "roundtrip.parse_verbalize_identity",
        failures == 0,
        if failures == 0 {
            format!("{total}/{total} equations round-tripped")
        } else {
            format!("{failures}/{total} failed; first: {first_counterexample}")
        },
    );
    report
}

fn grad_suite() -> CheckReport {
    use crate::autodiff::Var;
    let mut report = CheckReport::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1234);
    let mut randt = |shape: &[usize]| -> TensorData<f64> {
        use rand::Rng;
        let n: usize = shape.iter().product();
        TensorData {
            shape: shape.to_vec(),
            data: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
        }
    };
    type Case = (
        &'static str,
        Vec<TensorData<f64>>,
        fn(
            &mut crate::autodiff::Graph<f64>,
            &[Var],
        ) -> std::result::Result<Var, crate::autodiff::TensorError>,
    );
    let cases: Vec<Case> = vec![
        ("matmul", vec![randt(&[3, 4]), randt(&[4, 2])], |g, v| {
            let y = g.matmul(v[0], v[1])?;
            let n = g.values(y).len();
            let w = TensorData {
                shape: g.shape(y).to_vec(),
                data: (0..n).map(|i| 0.6 + 0.01 * i as f64).collect(),
            };
            let wl = g.leaf(&w, false);
            let p = g.mul(y, wl)?;
            Ok(g.sum_all(p))
        }),
        (
            "conv2d",
            vec![randt(&[2, 6, 8]), randt(&[3, 2, 2, 2]), randt(&[3])],
            |g, v| {
                let y = g.conv2d(v[0], v[1], Some(v[2]), 2)?;
                let n = g.values(y).len();
                let w = TensorData {
                    shape: g.shape(y).to_vec(),
                    data: (0..n).map(|i| 0.6 + 0.01 * i as f64).collect(),
                };
                let wl = g.leaf(&w, false);
                let p = g.mul(y, wl)?;
                Ok(g.sum_all(p))
            },
        ),
        (
            "softmax_cross_entropy",
            vec![randt(&[9])],
            |g, v| {
                let p = g.softmax(v[0])?;
                g.cross_entropy(p, 4)
            },
        ),
        ("sigmoid_tanh_mul", vec![randt(&[6]), randt(&[6])], |g, v| {
            let a = g.sigmoid(v[0]);
            let b = g.tanh(v[1]);
            let m = g.mul(a, b)?;
            Ok(g.sum_all(m))
        }),
        (
            "attention_shape_ops",
            vec![randt(&[5, 3]), randt(&[3]), randt(&[3, 2, 4])],
            |g, v| {
                let r = g.row_add(v[0], v[1])?;
                let m = g.mean_rows(r)?;
                let c = g.channels_to_rows(v[2])?;
                let mv = g.matmul(c, m)?;
                Ok(g.sum_all(mv))
            },
        ),
    ];
    for (name, inputs, build) in cases {
        let err = grad_check(build, &inputs);
        match err {
            Ok(e) => report.push(
                &format!("grad.{name}"),
                e < 1e-6,
                format!("max relative error {e:.3e}"),
            ),
            Err(err) => report.push(&format!("grad.{name}"), false, err.to_string()),
        }
    }

    // end-to-end model gradient on the tiny configuration
    let cfg = ModelConfig::tiny(12);
    let params: Params<f64> = init_params(&cfg, 5);
    let img = crate::layout::render(
        &sample_equation(Category::Integral, &mut ChaCha8Rng::seed_from_u64(3), 2),
        cfg.img_h as u32,
        cfg.img_w as u32,
    );
    let tokens = vec![data::START_ID, 5, 8, data::END_ID];
    let seed = 99u64;
    match full_model_fd_error(&params, &cfg, &img, &tokens, seed) {
        Ok(worst) => report.push(
            "grad.full_model",
            worst < 1e-4,
            format!("max relative error {worst:.3e}"),
        ),
        Err(e) => report.push("grad.full_model", false, e.to_string()),
    }
    report
}

/// Max relative error of the full-model analytic gradient against central
/// differences over every parameter coordinate.
pub fn full_model_fd_error(
    params: &Params<f64>,
    cfg: &ModelConfig,
    img: &EqImage,
    tokens: &[u32],
    seed: u64,
) -> Result<f64> {
    let (_, grads, _) =
        crate::model::example_loss_grads(params, cfg, img, tokens, true, seed)
            .map_err(Error::Tensor)?;
    let h = 1e-4;
    let mut worst = 0.0f64;
    let mut work = params.clone();
    for (name, t) in params {
        for j in 0..t.len() {
            let orig = work.get_mut(name).unwrap().data[j];
            work.get_mut(name).unwrap().data[j] = orig + h;
            let (up, _) = crate::model::example_loss(&work, cfg, img, tokens, true, seed)
                .map_err(Error::Tensor)?;
            work.get_mut(name).unwrap().data[j] = orig - h;
            let (down, _) = crate::model::example_loss(&work, cfg, img, tokens, true, seed)
                .map_err(Error::Tensor)?;
            work.get_mut(name).unwrap().data[j] = orig;
            let numeric = (up - down) / (2.0 * h);
            let analytic = grads[name][j];
            let err = (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

fn metrics_suite() -> CheckReport {
    let mut report = CheckReport::default();
    let s = |t: &str| tokenize_sentence(t);

    let cands = vec![s("x plus y")];
    let refs = vec![vec![s("x plus y all over z")]];
    match metrics::bleu(&cands, &refs, 1) {
        Ok(b1) => {
            let expected = (1.0f64 - 6.0 / 3.0).exp();
            report.push(
                "metrics.bleu_brevity_penalty",
                (b1 - expected).abs() < 1e-9,
                format!("bleu-1 {b1:.12} vs hand value {expected:.12}"),
            );
        }
        Err(e) => report.push("metrics.bleu_brevity_penalty", false, e.to_string()),
    }

    let cands = vec![s("x over z")];
    let refs = vec![vec![s("x plus y all over z")]];
    match metrics::rouge_l(&cands, &refs) {
        Ok(f) => {
            let b2 = metrics::ROUGE_BETA * metrics::ROUGE_BETA;
            let expected = (1.0 + b2) * 0.5 / (0.5 + b2);
            report.push(
                "metrics.rouge_lcs_f_measure",
                (f - expected).abs() < 1e-9,
                format!("rouge-l {f:.12} vs hand value {expected:.12}"),
            );
        }
        Err(e) => report.push("metrics.rouge_lcs_f_measure", false, e.to_string()),
    }

    let sentences: Vec<Sentence> = (0..10u64)
        .map(|seed| {
            let cat = Category::ALL[(seed % 7) as usize];
            s(&verbalize(&sample_equation(cat, &mut ChaCha8Rng::seed_from_u64(seed), 3)).text)
        })
        .collect();
    let ref_sets: Vec<Vec<Sentence>> = sentences.iter().map(|x| vec![x.clone()]).collect();
    let identity_ok = (1..=4)
        .map(|n| metrics::bleu(&sentences, &ref_sets, n).unwrap_or(0.0))
        .all(|v| (v - 1.0).abs() < 1e-9)
        && (metrics::rouge_l(&sentences, &ref_sets).unwrap_or(0.0) - 1.0).abs() < 1e-9
        && (metrics::cider(&sentences, &ref_sets).unwrap_or(0.0) - 1.0).abs() < 1e-9;
    report.push(
        "metrics.identity_scores_one",
        identity_ok,
        "identity candidates score 1.0 on all metrics".to_owned(),
    );

    let disjoint = metrics::cider(
        &[s("one two"), s("three four")],
        &[vec![s("five six")], vec![s("seven eight")]],
    )
    .unwrap_or(f64::NAN);
    report.push(
        "metrics.cider_disjoint_zero",
        disjoint == 0.0,
        format!("cider {disjoint}"),
    );
    report
}
