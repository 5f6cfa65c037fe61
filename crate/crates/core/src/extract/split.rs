use sha2::{Digest, Sha256};

use super::records::GoldAnnotation;
use crate::docparse::SentenceRef;

fn sentence_hash(s: &SentenceRef, seed: u64) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(s.doc_id.as_bytes());
    h.update([0x1f]);
    h.update(s.section_index.to_le_bytes());
    h.update(s.sentence_index.to_le_bytes());
    h.update(seed.to_le_bytes());
    h.finalize().into()
}

/// Deterministic sentence-level split. Sentences are ranked by a seeded
/// hash and the first `round(ratio * n)` go to train; each side keeps the
/// input order. Independent of thread count and input order.
pub fn split_train_eval(gold: &[GoldAnnotation], ratio: f64, seed: u64) -> (Vec<GoldAnnotation>, Vec<GoldAnnotation>) {
    assert!((0.0..=1.0).contains(&ratio), "split ratio {ratio} outside [0, 1]");
    let n_train = (ratio * gold.len() as f64).round() as usize;
    let mut ranked: Vec<(usize, [u8; 32])> =
        gold.iter().enumerate().map(|(i, g)| (i, sentence_hash(&g.sentence, seed))).collect();
    ranked.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| gold[a.0].sentence.cmp(&gold[b.0].sentence)));
    let mut in_train = vec![false; gold.len()];
    for &(i, _) in ranked.iter().take(n_train) {
        in_train[i] = true;
    }
    let (mut train, mut eval) = (Vec::with_capacity(n_train), Vec::with_capacity(gold.len() - n_train));
    for (g, t) in gold.iter().zip(in_train) {
        if t { train.push(g.clone()) } else { eval.push(g.clone()) }
    }
    (train, eval)
}
