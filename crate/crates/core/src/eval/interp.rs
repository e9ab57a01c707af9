use crate::error::{ensure, Error, Result};

/// Token counts of one phoneme class and their normalized distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct PhonemeHistogram {
    pub class: usize,
    pub counts: Vec<u64>,
    pub pdf: Vec<f64>,
}

impl PhonemeHistogram {
    pub fn from_counts(class: usize, counts: Vec<u64>) -> Self {
        let total: u64 = counts.iter().sum();
        let pdf = if total == 0 {
            vec![0.0; counts.len()]
        } else {
            counts.iter().map(|&c| c as f64 / total as f64).collect()
        };
        PhonemeHistogram { class, counts, pdf }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Per-utterance token sequence and frame labels.
pub struct LabeledTokens<'a> {
    pub utterance: &'a str,
    pub tokens: &'a [usize],
    pub labels: &'a [usize],
}

/// One histogram per observed class, ordered by class id.
pub fn token_histograms(utterances: &[LabeledTokens<'_>], book_size: usize) -> Result<Vec<PhonemeHistogram>> {
    let mut counts: std::collections::BTreeMap<usize, Vec<u64>> = Default::default();
    for u in utterances {
        if u.tokens.len() != u.labels.len() {
            return Err(Error::Contract(format!(
                "utterance {}: {} tokens but {} frame labels",
                u.utterance,
                u.tokens.len(),
                u.labels.len()
            )));
        }
        for (&tok, &class) in u.tokens.iter().zip(u.labels) {
            ensure!(tok < book_size, "utterance {}: token {} outside a book of {}", u.utterance, tok, book_size);
            counts.entry(class).or_insert_with(|| vec![0; book_size])[tok] += 1;
        }
    }
    Ok(counts.into_iter().map(|(c, n)| PhonemeHistogram::from_counts(c, n)).collect())
}

fn kl2(p: &[f64], m: &[f64]) -> f64 {
    p.iter()
        .zip(m)
        .filter(|(&a, _)| a > 0.0)
        .map(|(&a, &b)| a * (a / b).log2())
        .sum()
}

/// Jensen-Shannon divergence with base-2 logs, in `[0, 1]`.
///
/// Panics if `p` and `q` differ in length.
pub fn js_divergence(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len(), "distributions differ in size");
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
    (0.5 * kl2(p, &m) + 0.5 * kl2(q, &m)).clamp(0.0, 1.0)
}

/// Symmetric `P x P` matrix of pairwise divergences.
#[derive(Clone, Debug, PartialEq)]
pub struct JsMatrix {
    pub classes: Vec<usize>,
    pub values: Vec<f64>,
}

impl JsMatrix {
    pub fn size(&self) -> usize {
        self.classes.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.size() + j]
    }
}

pub fn js_matrix(histograms: &[PhonemeHistogram]) -> Result<JsMatrix> {
    ensure!(histograms.len() >= 2, "a divergence matrix needs at least 2 classes, got {}", histograms.len());
    let p = histograms.len();
    let mut values = vec![0.0; p * p];
    for i in 0..p {
        for j in i + 1..p {
            let d = js_divergence(&histograms[i].pdf, &histograms[j].pdf);
            values[i * p + j] = d;
            values[j * p + i] = d;
        }
    }
    Ok(JsMatrix {
        classes: histograms.iter().map(|h| h.class).collect(),
        values,
    })
}
