//! Synthetic corpus generation, the JSONL manifest, vocabulary construction
//! and sequence encoding.
//!
//! Records are fully reproducible: every record stores the derived seed that
//! generated its expression, expressions are deduplicated across all splits
//! by canonical string, and rasterization is bit-deterministic.

use crate::error::{Error, Result};
use crate::exec;
use crate::expr::{sample_equation, to_canonical_string, Category, Expr};
use crate::layout::{layout, rasterize, EqImage, DEFAULT_STYLE_SIZE};
use crate::verbalize::verbalize;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

pub const PAD_ID: u32 = 0;
pub const START_ID: u32 = 1;
pub const END_ID: u32 = 2;
pub const UNK_ID: u32 = 3;
pub const SPECIALS: [&str; 4] = ["<pad>", "<start>", "<end>", "<unk>"];

/// Deterministic seed derivation (splitmix64 over both halves).
pub fn mix_seed(a: u64, b: u64) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    splitmix(splitmix(a) ^ b.rotate_left(32))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn from_str(s: &str) -> Option<Split> {
        Split::ALL.iter().copied().find(|x| x.as_str() == s)
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One manifest line; field order is stable for diffability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: u64,
    pub category: Category,
    pub seed: u64,
    pub image: String,
    pub description: String,
    pub canonical: String,
    pub split: Split,
}

/// Per-category record counts for one split, in `Category::ALL` order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitCounts {
    pub per_category: [usize; 7],
}

/// Relative category weights of the corpus (LE:IE:PLE:LT:DI:IN:FIN).
pub const CATEGORY_WEIGHTS: [usize; 7] = [41, 43, 43, 44, 39, 40, 36];

impl SplitCounts {
    pub fn total(&self) -> usize {
        self.per_category.iter().sum()
    }

    /// Split `total` across categories by the corpus weights using largest
    /// remainders, so the counts are exact.
    pub fn proportional(total: usize) -> SplitCounts {
        let weight_sum: usize = CATEGORY_WEIGHTS.iter().sum();
        let mut counts = [0usize; 7];
        let mut rems: Vec<(usize, usize)> = Vec::with_capacity(7);
        let mut assigned = 0;
        for (i, &w) in CATEGORY_WEIGHTS.iter().enumerate() {
            counts[i] = total * w / weight_sum;
            assigned += counts[i];
            rems.push((i, (total * w) % weight_sum));
        }
        rems.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        for &(i, _) in rems.iter().take(total - assigned) {
            counts[i] += 1;
        }
        SplitCounts {
            per_category: counts,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GenConfig {
    pub train: SplitCounts,
    pub val: SplitCounts,
    pub test: SplitCounts,
    pub master_seed: u64,
    pub depth_budget: usize,
    pub img_h: u32,
    pub img_w: u32,
    pub style_size: u32,
}

impl GenConfig {
    pub fn desk_default() -> GenConfig {
        GenConfig {
            train: SplitCounts::proportional(2000),
            val: SplitCounts::proportional(250),
            test: SplitCounts::proportional(250),
            master_seed: 17,
            depth_budget: 4,
            img_h: 64,
            img_w: 256,
            style_size: DEFAULT_STYLE_SIZE,
        }
    }

    fn counts(&self, split: Split) -> &SplitCounts {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

pub fn manifest_path(dir: &Path) -> PathBuf {
    dir.join("manifest.jsonl")
}

pub fn vocab_path(dir: &Path) -> PathBuf {
    dir.join("vocab.tsv")
}

const MAX_RESAMPLES: u64 = 1000;

/// Generate the corpus: PGM images under `out_dir/images/` plus the JSONL
/// manifest. Duplicate expressions (by canonical string, across all splits)
/// are rejected and resampled with a bumped retry index, so the whole run is
/// a pure function of the config.
pub fn generate_dataset(cfg: &GenConfig, out_dir: &Path) -> Result<Vec<DatasetRecord>> {
    let mut plan: Vec<(Split, Category)> = Vec::new();
    for split in Split::ALL {
        let counts = cfg.counts(split);
        for (ci, cat) in Category::ALL.iter().enumerate() {
            for _ in 0..counts.per_category[ci] {
                plan.push((split, *cat));
            }
        }
    }
    let n = plan.len();

    let sample_one = |id: u64, retry: u64| -> Expr {
        let seed = mix_seed(cfg.master_seed, mix_seed(id, retry));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        sample_equation(plan[id as usize].1, &mut rng, cfg.depth_budget)
    };

    // first attempts in parallel, then a sequential dedup pass that
    // resamples collisions deterministically
    let mut exprs: Vec<(Expr, u64)> = exec::map_indexed(n, |i| (sample_one(i as u64, 0), 0u64));
    let mut seen: HashSet<String> = HashSet::with_capacity(n);
    for id in 0..n {
        let mut retry = exprs[id].1;
        let mut canon = to_canonical_string(&exprs[id].0);
        while !seen.insert(canon.clone()) {
            retry += 1;
            if retry > MAX_RESAMPLES {
                return Err(Error::Data(format!(
                    "could not find a fresh expression for record {id} after {MAX_RESAMPLES} resamples"
                )));
            }
            exprs[id] = (sample_one(id as u64, retry), retry);
            canon = to_canonical_string(&exprs[id].0);
        }
    }

    let images_dir = out_dir.join("images");
    std::fs::create_dir_all(&images_dir)?;

    let rendered: Vec<EqImage> = exec::map_indexed(n, |i| {
        rasterize(&layout(&exprs[i].0, cfg.style_size), cfg.img_h, cfg.img_w)
    });

    let mut records = Vec::with_capacity(n);
    for (id, ((expr, retry), image)) in exprs.iter().zip(&rendered).enumerate() {
        let rel = format!("images/{id:05}.pgm");
        image.write_pgm(&out_dir.join(&rel))?;
        records.push(DatasetRecord {
            id: id as u64,
            category: plan[id].1,
            seed: mix_seed(cfg.master_seed, mix_seed(id as u64, *retry)),
            image: rel,
            description: verbalize(expr).text,
            canonical: to_canonical_string(expr),
            split: plan[id].0,
        });
    }
    write_manifest(&manifest_path(out_dir), &records)?;
    Ok(records)
}

pub fn write_manifest(path: &Path, records: &[DatasetRecord]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    for r in records {
        serde_json::to_writer(&mut f, r)?;
        f.write_all(b"\n")?;
    }
    Ok(())
}

pub fn load_manifest(path: &Path) -> Result<Vec<DatasetRecord>> {
    let f = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

/// Word/id mapping. Ids 0..=3 are the specials; content words get ids by
/// (count desc, word asc) over the training descriptions.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    /// Build from training descriptions, keeping words that occur at least
    /// `min_count` times.
    pub fn build<'a>(
        descriptions: impl Iterator<Item = &'a str>,
        min_count: usize,
    ) -> Result<Vocab> {
        let mut counts: BTreeMap<&'a str, usize> = BTreeMap::new();
        let mut any = false;
        for text in descriptions {
            any = true;
            for tok in text.split_whitespace() {
                *counts.entry(tok).or_insert(0) += 1;
            }
        }
        if !any {
            return Err(Error::Data("empty training corpus".to_owned()));
        }
        let mut kept: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|&(_, c)| c >= min_count)
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let mut words: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        words.extend(kept.into_iter().map(|(w, _)| w.to_owned()));
        Ok(Vocab::from_words(words))
    }

    fn from_words(words: Vec<String>) -> Vocab {
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32))
            .collect();
        Vocab { words, index }
    }

    pub fn size(&self) -> usize {
        self.words.len()
    }

    pub fn id(&self, word: &str) -> u32 {
        self.index.get(word).copied().unwrap_or(UNK_ID)
    }

    pub fn word(&self, id: u32) -> Option<&str> {
        self.words.get(id as usize).map(String::as_str)
    }

    /// `[start] + ids + [end]`, unknown words mapping to `<unk>`.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        let mut out = vec![START_ID];
        out.extend(text.split_whitespace().map(|w| self.id(w)));
        out.push(END_ID);
        out
    }

    /// Inverse of `encode` for in-vocabulary text: drops the special ids.
    pub fn decode_words(&self, ids: &[u32]) -> String {
        let mut out = String::new();
        for &id in ids {
            if id == PAD_ID || id == START_ID || id == END_ID {
                continue;
            }
            if !out.is_empty() {
                out.push(' ');
            }
            out.push_str(self.word(id).unwrap_or("<unk>"));
        }
        out
    }

    /// Plain-text form: `word<TAB>id`, sorted by id.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        for (i, w) in self.words.iter().enumerate() {
            writeln!(f, "{w}\t{i}")?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Vocab> {
        let f = std::fs::File::open(path)?;
        let mut words = Vec::new();
        for (lineno, line) in BufReader::new(f).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let (word, id) = line
                .split_once('\t')
                .ok_or_else(|| Error::Data(format!("vocab line {lineno}: missing tab")))?;
            let id: usize = id
                .trim()
                .parse()
                .map_err(|_| Error::Data(format!("vocab line {lineno}: bad id")))?;
            if id != words.len() {
                return Err(Error::Data(format!(
                    "vocab line {lineno}: ids must be dense and sorted"
                )));
            }
            words.push(word.to_owned());
        }
        if words.len() < SPECIALS.len() {
            return Err(Error::Data(
                "vocab too small for the special ids".to_owned(),
            ));
        }
        Ok(Vocab::from_words(words))
    }
}
