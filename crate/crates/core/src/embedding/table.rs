//! Model-ready embedding tables with the OOV-fill initialization rule.

use std::collections::BTreeSet;

use crate::embedding::{PretrainedEmbeddings, Vocabulary, PAD_ID, SPECIAL_COUNT, UNK_ID};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Vector};

/// A vocabulary-aligned embedding matrix. Row `i` is the vector for token
/// id `i`; after initialization the rows are independent parameters.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    pub vocab: Vocabulary,
    pub matrix: Matrix,
    /// Ids whose rows were set to the out-of-vocabulary mean.
    pub oov_ids: BTreeSet<usize>,
}

impl EmbeddingTable {
    /// Wraps a pretrained file as a table in file order, with zero rows for
    /// the four specials. For whole-table transforms (debiasing, hubness
    /// diagnostics) that are not tied to a corpus vocabulary.
    pub fn from_pretrained(pre: &PretrainedEmbeddings) -> Result<Self> {
        let vocab = Vocabulary::from_words(pre.iter().map(|(w, _)| w))?;
        let mut matrix = Matrix::zeros(vocab.len(), pre.dim());
        for (i, (_, v)) in pre.iter().enumerate() {
            matrix.row_mut(SPECIAL_COUNT + i).copy_from_slice(v.as_slice());
        }
        Ok(EmbeddingTable { vocab, matrix, oov_ids: BTreeSet::new() })
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    /// Entries in id order with the specials dropped, matching the words of
    /// the file the table came from.
    pub fn iter_words(&self) -> impl ExactSizeIterator<Item = (&str, &[f64])> {
        (SPECIAL_COUNT..self.vocab.len()).map(|i| (self.vocab.token(i), self.matrix.row(i)))
    }

    /// Entries in id order, for writing as embedding text.
    pub fn iter(&self) -> impl ExactSizeIterator<Item = (&str, &[f64])> {
        (0..self.vocab.len()).map(|i| (self.vocab.token(i), self.matrix.row(i)))
    }
}

/// Initializes one embedding row per vocabulary token: tokens found in
/// `pre` copy their pretrained vector; every other row except `<pad>` gets
/// the mean vector over words of `pre` that are NOT in the vocabulary
/// (`<unk>` always gets that mean); `<pad>` stays zero and is never
/// updated. Fails when `pre` has no words outside the vocabulary, because
/// the mean is undefined there.
pub fn init_embedding_table(pre: &PretrainedEmbeddings, vocab: &Vocabulary) -> Result<EmbeddingTable> {
    let dim = pre.dim();
    let mut mean = vec![0.0; dim];
    let mut outside = 0usize;
    for (word, vector) in pre.iter() {
        if !vocab.contains(word) {
            for (m, v) in mean.iter_mut().zip(vector.as_slice()) {
                *m += v;
            }
            outside += 1;
        }
    }
    if outside == 0 {
        return Err(Error::Argument(
            "no pretrained words outside the vocabulary: the OOV mean is undefined".into(),
        ));
    }
    for m in &mut mean {
        *m /= outside as f64;
    }
    let mean = Vector::new(mean);

    let mut matrix = Matrix::zeros(vocab.len(), dim);
    let mut oov_ids = BTreeSet::new();
    for id in 0..vocab.len() {
        if id == PAD_ID {
            continue;
        }
        let token = vocab.token(id);
        match pre.get(token) {
            Some(v) if id != UNK_ID => matrix.row_mut(id).copy_from_slice(v.as_slice()),
            _ => {
                matrix.row_mut(id).copy_from_slice(mean.as_slice());
                oov_ids.insert(id);
            }
        }
    }
    Ok(EmbeddingTable { vocab: vocab.clone(), matrix, oov_ids })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{build_vocabulary, BOS_ID, EOS_ID};

    fn pre(entries: &[(&str, &[f64])]) -> PretrainedEmbeddings {
        let mut p = PretrainedEmbeddings::new(entries[0].1.len()).unwrap();
        for (w, v) in entries {
            p.insert(w, Vector::new(v.to_vec())).unwrap();
        }
        p
    }

    fn vocab_of(corpus: &str) -> Vocabulary {
        let sentences: Vec<Vec<String>> = corpus
            .lines()
            .map(|l| l.split_whitespace().map(str::to_string).collect())
            .collect();
        build_vocabulary(&sentences, 1, None)
    }

    #[test]
    fn found_words_copy_and_missing_words_get_the_outside_mean() {
        let pre = pre(&[("a", &[1.0, 0.0]), ("b", &[3.0, 2.0])]);
        let vocab = vocab_of("a c");
        let table = init_embedding_table(&pre, &vocab).unwrap();

        let a = vocab.id("a").unwrap();
        let c = vocab.id("c").unwrap();
        assert_eq!(table.matrix.row(a), &[1.0, 0.0]);
        assert_eq!(table.matrix.row(c), &[3.0, 2.0]);
        assert_eq!(table.matrix.row(PAD_ID), &[0.0, 0.0]);
        assert_eq!(table.matrix.row(UNK_ID), &[3.0, 2.0]);
        assert_eq!(table.matrix.row(BOS_ID), &[3.0, 2.0]);

        let expected: BTreeSet<usize> = [UNK_ID, BOS_ID, EOS_ID, c].into_iter().collect();
        assert_eq!(table.oov_ids, expected);
    }

    #[test]
    fn exact_cover_with_no_outside_words_is_an_error() {
        let pre = pre(&[("a", &[1.0]), ("b", &[2.0])]);
        let vocab = vocab_of("a b");
        assert!(init_embedding_table(&pre, &vocab).is_err());
    }

    #[test]
    fn oov_rows_are_identical_and_match_a_naive_mean() {
        let pre = pre(&[
            ("w1", &[1.0, 2.0, 3.0]),
            ("in1", &[9.0, 9.0, 9.0]),
            ("w2", &[2.0, 4.0, 6.0]),
            ("w3", &[3.0, 6.0, 9.0]),
        ]);
        let vocab = vocab_of("in1 gone1 gone2");
        let table = init_embedding_table(&pre, &vocab).unwrap();

        // Naive recomputation over {w1, w2, w3}.
        let naive = [2.0, 4.0, 6.0];
        let first = *table.oov_ids.iter().next().unwrap();
        for &id in &table.oov_ids {
            assert_eq!(table.matrix.row(id), table.matrix.row(first));
            assert_eq!(table.matrix.row(id), &naive);
        }
        assert_eq!(table.matrix.row(vocab.id("in1").unwrap()), &[9.0, 9.0, 9.0]);
        assert!(!table.oov_ids.contains(&PAD_ID));
    }

    #[test]
    fn unk_gets_the_mean_even_if_pretrained_has_an_unk_entry() {
        let pre = pre(&[("<unk>", &[7.0]), ("out", &[1.0])]);
        let vocab = vocab_of("a");
        let table = init_embedding_table(&pre, &vocab).unwrap();
        assert_eq!(table.matrix.row(UNK_ID), &[1.0]);
        assert!(table.oov_ids.contains(&UNK_ID));
    }

    #[test]
    fn table_iter_aligns_tokens_with_rows() {
        let pre = pre(&[("a", &[1.0]), ("zzz", &[5.0])]);
        let vocab = vocab_of("a");
        let table = init_embedding_table(&pre, &vocab).unwrap();
        let entries: Vec<(&str, &[f64])> = table.iter().collect();
        assert_eq!(entries.len(), 5);
        assert_eq!(entries[0], ("<pad>", &[0.0][..]));
        assert_eq!(entries[4], ("a", &[1.0][..]));
    }

    #[test]
    fn from_pretrained_preserves_file_order_and_values() {
        let pre = pre(&[("b", &[1.0, 2.0]), ("a", &[3.0, 4.0])]);
        let table = EmbeddingTable::from_pretrained(&pre).unwrap();
        assert_eq!(table.vocab.len(), 6);
        assert_eq!(table.matrix.row(PAD_ID), &[0.0, 0.0]);
        assert_eq!(table.matrix.row(UNK_ID), &[0.0, 0.0]);
        assert_eq!(table.vocab.token(4), "b");
        assert_eq!(table.matrix.row(4), &[1.0, 2.0]);
        assert_eq!(table.matrix.row(5), &[3.0, 4.0]);
        assert!(table.oov_ids.is_empty());

        let words: Vec<(&str, &[f64])> = table.iter_words().collect();
        assert_eq!(words, vec![("b", &[1.0, 2.0][..]), ("a", &[3.0, 4.0][..])]);
    }

    #[test]
    fn from_pretrained_rejects_reserved_names() {
        let pre = pre(&[("<bos>", &[1.0]), ("x", &[2.0])]);
        assert!(EmbeddingTable::from_pretrained(&pre).is_err());
    }
}
