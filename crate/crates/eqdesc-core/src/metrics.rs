//! Corpus scoring: BLEU-1..4, ROUGE-L (LCS F-measure, beta = 1.2) and CIDEr
//! (TF-IDF n-gram cosine, n = 1..4, no scaling factor, so an identical pair
//! scores 1.0).

use crate::error::{Error, Result};
use serde::Serialize;
use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

pub type Sentence = Vec<String>;

pub fn tokenize_sentence(text: &str) -> Sentence {
    text.split_whitespace().map(str::to_owned).collect()
}

fn check_aligned(c: usize, r: usize) -> Result<()> {
    if c != r {
        return Err(Error::Metric(format!(
            "{c} candidates vs {r} reference sets"
        )));
    }
    if c == 0 {
        return Err(Error::Metric("empty corpus".to_owned()));
    }
    Ok(())
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut m: HashMap<&[String], usize> = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

/// Corpus-level BLEU with uniform weights over 1..=max_n, modified n-gram
/// precision and the brevity penalty `exp(1 - r/c)` when the candidate
/// corpus is shorter than the (closest-length) reference corpus.
pub fn bleu(candidates: &[Sentence], references: &[Vec<Sentence>], max_n: usize) -> Result<f64> {
    check_aligned(candidates.len(), references.len())?;
    if !(1..=4).contains(&max_n) {
        return Err(Error::Metric(format!("max_n {max_n} outside 1..=4")));
    }
    let mut clipped = vec![0usize; max_n];
    let mut totals = vec![0usize; max_n];
    let mut cand_len = 0usize;
    let mut ref_len = 0usize;
    for (cand, refs) in candidates.iter().zip(references) {
        if refs.is_empty() {
            return Err(Error::Metric("candidate without references".to_owned()));
        }
        cand_len += cand.len();
        let closest = refs
            .iter()
            .map(|r| r.len())
            .min_by_key(|&l| (l.abs_diff(cand.len()), l))
            .unwrap();
        ref_len += closest;
        for n in 1..=max_n {
            let cc = ngram_counts(cand, n);
            let mut best_ref: HashMap<&[String], usize> = HashMap::new();
            for r in refs {
                for (g, c) in ngram_counts(r, n) {
                    let e = best_ref.entry(g).or_insert(0);
                    *e = (*e).max(c);
                }
            }
            for (g, c) in &cc {
                clipped[n - 1] += (*c).min(best_ref.get(g).copied().unwrap_or(0));
                totals[n - 1] += c;
            }
        }
    }
    if cand_len == 0 {
        return Ok(0.0);
    }
    let mut log_sum = 0.0f64;
    for n in 0..max_n {
        if totals[n] == 0 || clipped[n] == 0 {
            return Ok(0.0);
        }
        log_sum += (clipped[n] as f64 / totals[n] as f64).ln();
    }
    let precision = (log_sum / max_n as f64).exp();
    let bp = if cand_len < ref_len {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    } else {
        1.0
    };
    Ok(bp * precision)
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
        cur.fill(0);
    }
    prev[b.len()]
}

pub const ROUGE_BETA: f64 = 1.2;

fn rouge_l_pair(cand: &[String], reference: &[String]) -> f64 {
    if cand.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let lcs = lcs_len(cand, reference) as f64;
    if lcs == 0.0 {
        return 0.0;
    }
    let p = lcs / cand.len() as f64;
    let r = lcs / reference.len() as f64;
    let b2 = ROUGE_BETA * ROUGE_BETA;
    (1.0 + b2) * p * r / (r + b2 * p)
}

/// Mean per-example LCS-based F-measure, taking the best reference.
pub fn rouge_l(candidates: &[Sentence], references: &[Vec<Sentence>]) -> Result<f64> {
    check_aligned(candidates.len(), references.len())?;
    let mut total = 0.0;
    for (cand, refs) in candidates.iter().zip(references) {
        if refs.is_empty() {
            return Err(Error::Metric("candidate without references".to_owned()));
        }
        total += refs
            .iter()
            .map(|r| rouge_l_pair(cand, r))
            .fold(0.0, f64::max);
    }
    Ok(total / candidates.len() as f64)
}

const CIDER_MAX_N: usize = 4;

type NgramVec = HashMap<Vec<String>, f64>;

fn tfidf_vector(tokens: &[String], n: usize, idf: &HashMap<Vec<String>, f64>, log_n: f64) -> NgramVec {
    let mut counts: NgramVec = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w.to_vec()).or_insert(0.0) += 1.0;
        }
    }
    for (g, c) in counts.iter_mut() {
        let w = idf.get(g).copied().unwrap_or(log_n);
        *c *= w;
    }
    counts
}

fn cosine(a: &NgramVec, b: &NgramVec) -> f64 {
    let na: f64 = a.values().map(|v| v * v).sum::<f64>().sqrt();
    let nb: f64 = b.values().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let dot: f64 = a
        .iter()
        .filter_map(|(g, v)| b.get(g).map(|w| v * w))
        .sum();
    dot / (na * nb)
}

/// Per-example CIDEr: per n in 1..=4, cosine similarity of TF-IDF n-gram
/// vectors with document frequencies taken over the whole reference corpus,
/// averaged over n and references.
pub fn cider_per_example(
    candidates: &[Sentence],
    references: &[Vec<Sentence>],
) -> Result<Vec<f64>> {
    check_aligned(candidates.len(), references.len())?;
    let distinct: std::collections::HashSet<&Sentence> = references.iter().flatten().collect();
    if distinct.len() < 2 {
        return Err(Error::Metric(
            "degenerate reference corpus: IDF needs at least 2 distinct documents".to_owned(),
        ));
    }
    let n_docs = references.len() as f64;
    let log_n = n_docs.ln();
    // document frequency per n-gram: number of examples whose reference set
    // contains it
    let mut idf: Vec<HashMap<Vec<String>, f64>> = vec![HashMap::new(); CIDER_MAX_N];
    for refs in references {
        for n in 1..=CIDER_MAX_N {
            let mut seen: std::collections::HashSet<Vec<String>> =
                std::collections::HashSet::new();
            for r in refs {
                if r.len() >= n {
                    for w in r.windows(n) {
                        seen.insert(w.to_vec());
                    }
                }
            }
            for g in seen {
                *idf[n - 1].entry(g).or_insert(0.0) += 1.0;
            }
        }
    }
    for table in idf.iter_mut() {
        for v in table.values_mut() {
            *v = (n_docs / v.max(1.0)).ln();
        }
    }

    let mut out = Vec::with_capacity(candidates.len());
    for (cand, refs) in candidates.iter().zip(references) {
        if refs.is_empty() {
            return Err(Error::Metric("candidate without references".to_owned()));
        }
        let mut example = 0.0;
        for n in 1..=CIDER_MAX_N {
            let gc = tfidf_vector(cand, n, &idf[n - 1], log_n);
            let sim: f64 = refs
                .iter()
                .map(|r| cosine(&gc, &tfidf_vector(r, n, &idf[n - 1], log_n)))
                .sum::<f64>()
                / refs.len() as f64;
            example += sim;
        }
        out.push(example / CIDER_MAX_N as f64);
    }
    Ok(out)
}

/// Corpus CIDEr: mean of the per-example scores.
pub fn cider(candidates: &[Sentence], references: &[Vec<Sentence>]) -> Result<f64> {
    let per = cider_per_example(candidates, references)?;
    Ok(per.iter().sum::<f64>() / per.len() as f64)
}

/// Scores for one decoded example.
#[derive(Debug, Clone, Serialize)]
pub struct ExampleScores {
    pub id: u64,
    pub reference: String,
    pub candidate: String,
    pub bleu4: f64,
    pub rouge_l: f64,
    pub cider: f64,
}

/// Corpus summary plus the per-example breakdown.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub n_examples: usize,
    pub bleu1: f64,
    pub bleu2: f64,
    pub bleu3: f64,
    pub bleu4: f64,
    pub rouge_l: f64,
    pub cider: f64,
    #[serde(skip)]
    pub per_example: Vec<ExampleScores>,
}

impl EvalReport {
    /// Score candidates against single references, with per-example detail.
    pub fn compute(ids: &[u64], candidates: &[Sentence], references: &[Sentence]) -> Result<EvalReport> {
        check_aligned(candidates.len(), references.len())?;
        let ref_sets: Vec<Vec<Sentence>> = references.iter().map(|r| vec![r.clone()]).collect();
        let b = [
            bleu(candidates, &ref_sets, 1)?,
            bleu(candidates, &ref_sets, 2)?,
            bleu(candidates, &ref_sets, 3)?,
            bleu(candidates, &ref_sets, 4)?,
        ];
        let rl = rouge_l(candidates, &ref_sets)?;
        let per_cider = cider_per_example(candidates, &ref_sets)?;
        let cd = per_cider.iter().sum::<f64>() / per_cider.len() as f64;
        let mut per_example = Vec::with_capacity(candidates.len());
        for (i, (cand, rf)) in candidates.iter().zip(references).enumerate() {
            let pair_c = std::slice::from_ref(cand);
            let pair_r = vec![vec![rf.clone()]];
            per_example.push(ExampleScores {
                id: ids.get(i).copied().unwrap_or(i as u64),
                reference: rf.join(" "),
                candidate: cand.join(" "),
                bleu4: bleu(pair_c, &pair_r, 4)?,
                rouge_l: rouge_l_pair(cand, rf),
                cider: per_cider[i],
            });
        }
        Ok(EvalReport {
            n_examples: candidates.len(),
            bleu1: b[0],
            bleu2: b[1],
            bleu3: b[2],
            bleu4: b[3],
            rouge_l: rl,
            cider: cd,
            per_example,
        })
    }

    /// JSON lines: the summary record first, then one record per example.
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        serde_json::to_writer(&mut f, self)?;
        f.write_all(b"\n")?;
        for ex in &self.per_example {
            serde_json::to_writer(&mut f, ex)?;
            f.write_all(b"\n")?;
        }
        Ok(())
    }
}
