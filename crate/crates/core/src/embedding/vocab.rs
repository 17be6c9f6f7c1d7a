//! Vocabulary construction with fixed special tokens.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const BOS_ID: usize = 2;
pub const EOS_ID: usize = 3;
/// Number of reserved ids; real words start here.
pub const SPECIAL_COUNT: usize = 4;

const SPECIALS: [&str; 4] = ["<pad>", "<unk>", "<bos>", "<eos>"];

/// Token inventory with stable ids. Ids 0..=3 are always
/// `<pad>`, `<unk>`, `<bos>`, `<eos>`, in that order.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    frequency: HashMap<String, u64>,
}

impl Vocabulary {
    fn from_sorted(non_special: Vec<(String, u64)>) -> Self {
        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        let mut frequency = HashMap::new();
        for (tok, freq) in non_special {
            frequency.insert(tok.clone(), freq);
            tokens.push(tok);
        }
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { tokens, index, frequency }
    }

    /// Wraps a plain word list in order, with zero frequencies. The list
    /// must be duplicate-free and may not use the reserved special names.
    pub(crate) fn from_words<'a>(words: impl Iterator<Item = &'a str>) -> Result<Self> {
        let mut non_special = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for w in words {
            if SPECIALS.contains(&w) {
                return Err(Error::Config(format!("word list uses the reserved token {w:?}")));
            }
            if !seen.insert(w) {
                return Err(Error::Config(format!("word list repeats {w:?}")));
            }
            non_special.push((w.to_string(), 0));
        }
        Ok(Self::from_sorted(non_special))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false // the four specials are always present
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Id of `token`, falling back to `<unk>`.
    pub fn id_or_unk(&self, token: &str) -> usize {
        self.id(token).unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    /// Count observed while building; zero for specials and absent tokens.
    pub fn frequency(&self, token: &str) -> u64 {
        self.frequency.get(token).copied().unwrap_or(0)
    }

    /// All tokens in id order.
    pub fn tokens(&self) -> impl ExactSizeIterator<Item = &str> {
        self.tokens.iter().map(String::as_str)
    }

    /// Maps tokens to ids with `<unk>` fallback. No BOS/EOS wrapping; the
    /// model layer decides framing.
    pub fn encode(&self, tokens: &[impl AsRef<str>]) -> Vec<usize> {
        tokens.iter().map(|t| self.id_or_unk(t.as_ref())).collect()
    }

    /// Maps ids back to tokens. Out-of-range ids are a caller bug.
    pub fn decode(&self, ids: &[usize]) -> Vec<&str> {
        ids.iter().map(|&i| self.token(i)).collect()
    }

    /// FNV-1a over tokens in id order; stable identity for checkpoints.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for tok in &self.tokens {
            for &b in tok.as_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
            h ^= 0xff;
            h = h.wrapping_mul(0x100000001b3);
        }
        h
    }

    /// Writes "token<TAB>frequency" lines in id order.
    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        for tok in &self.tokens {
            writeln!(w, "{tok}\t{}", self.frequency(tok))?;
        }
        Ok(())
    }

    /// Inverse of [`Vocabulary::write_to`].
    pub fn read_from(r: impl BufRead) -> Result<Vocabulary> {
        let mut tokens = Vec::new();
        let mut frequency = HashMap::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::io("<vocabulary>", e))?;
            if line.is_empty() {
                continue;
            }
            let (tok, freq) = line.split_once('\t').ok_or_else(|| Error::Parse {
                path: "<vocabulary>".into(),
                line: lineno + 1,
                msg: "expected \"token<TAB>frequency\"".into(),
            })?;
            let freq: u64 = freq.parse().map_err(|_| Error::Parse {
                path: "<vocabulary>".into(),
                line: lineno + 1,
                msg: format!("bad frequency {freq:?}"),
            })?;
            if freq > 0 {
                frequency.insert(tok.to_string(), freq);
            }
            tokens.push(tok.to_string());
        }
        if tokens.len() < 4 || tokens[..4] != SPECIALS {
            return Err(Error::Config(
                "vocabulary file must start with <pad>, <unk>, <bos>, <eos>".into(),
            ));
        }
        let mut index = HashMap::new();
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Config(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Vocabulary { tokens, index, frequency })
    }
}

/// Builds a vocabulary from whitespace-tokenized sentences. Tokens are kept
/// when their count reaches `min_freq`, ordered by count descending with
/// ties broken by first occurrence, and capped at `max_size` non-special
/// entries when given.
pub fn build_vocabulary<S: AsRef<str>>(
    sentences: &[Vec<S>],
    min_freq: u64,
    max_size: Option<usize>,
) -> Vocabulary {
    let mut counts: HashMap<&str, (u64, usize)> = HashMap::new();
    let mut seen = 0usize;
    for sent in sentences {
        for tok in sent {
            let tok = tok.as_ref();
            let entry = counts.entry(tok).or_insert((0, seen));
            entry.0 += 1;
            seen += 1;
        }
    }

    let mut candidates: Vec<(&str, u64, usize)> = counts
        .into_iter()
        .filter(|(tok, (count, _))| *count >= min_freq.max(1) && !SPECIALS.contains(tok))
        .map(|(tok, (count, first))| (tok, count, first))
        .collect();
    candidates.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
    if let Some(cap) = max_size {
        candidates.truncate(cap);
    }

    Vocabulary::from_sorted(
        candidates.into_iter().map(|(tok, count, _)| (tok.to_string(), count)).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sentences(text: &str) -> Vec<Vec<String>> {
        text.lines()
            .map(|l| l.split_whitespace().map(str::to_string).collect())
            .collect()
    }

    #[test]
    fn counts_and_orders_simple_corpus() {
        let v = build_vocabulary(&sentences("a a b"), 1, None);
        let toks: Vec<&str> = v.tokens().collect();
        assert_eq!(toks, ["<pad>", "<unk>", "<bos>", "<eos>", "a", "b"]);
        assert_eq!(v.frequency("a"), 2);
        assert_eq!(v.id("a"), Some(4));
    }

    #[test]
    fn min_freq_filters_singletons() {
        let v = build_vocabulary(&sentences("a a b"), 2, None);
        let toks: Vec<&str> = v.tokens().collect();
        assert_eq!(toks, ["<pad>", "<unk>", "<bos>", "<eos>", "a"]);
    }

    #[test]
    fn frequency_ties_break_by_first_occurrence() {
        let v = build_vocabulary(&sentences("b a b a"), 1, None);
        let toks: Vec<&str> = v.tokens().collect();
        assert_eq!(&toks[4..], ["b", "a"]);
    }

    #[test]
    fn max_size_caps_non_special_tokens() {
        let v = build_vocabulary(&sentences("a a a b b c"), 1, Some(2));
        let toks: Vec<&str> = v.tokens().collect();
        assert_eq!(&toks[4..], ["a", "b"]);
        assert_eq!(v.len(), 6);
    }

    #[test]
    fn empty_corpus_keeps_only_specials() {
        let v = build_vocabulary::<String>(&[], 1, None);
        assert_eq!(v.len(), 4);
        assert_eq!(v.token(PAD_ID), "<pad>");
        assert_eq!(v.token(EOS_ID), "<eos>");
    }

    #[test]
    fn special_lookalikes_in_corpus_do_not_duplicate() {
        let v = build_vocabulary(&sentences("<unk> a <unk>"), 1, None);
        let toks: Vec<&str> = v.tokens().collect();
        assert_eq!(toks, ["<pad>", "<unk>", "<bos>", "<eos>", "a"]);
        assert_eq!(v.id("<unk>"), Some(UNK_ID));
    }

    #[test]
    fn encode_falls_back_to_unk() {
        let v = build_vocabulary(&sentences("a b"), 1, None);
        assert_eq!(v.encode(&["a", "zzz", "b"]), vec![4, UNK_ID, 5]);
        assert_eq!(v.decode(&[4, 1]), vec!["a", "<unk>"]);
    }

    #[test]
    fn ids_are_stable_across_rebuilds() {
        let corpus = sentences("the cat sat on the mat\nthe dog sat");
        let a = build_vocabulary(&corpus, 1, None);
        let b = build_vocabulary(&corpus, 1, None);
        let ta: Vec<&str> = a.tokens().collect();
        let tb: Vec<&str> = b.tokens().collect();
        assert_eq!(ta, tb);
        assert_eq!(a.fingerprint(), b.fingerprint());
    }

    #[test]
    fn write_read_round_trip() {
        let v = build_vocabulary(&sentences("the cat sat on the mat"), 1, None);
        let mut buf = Vec::new();
        v.write_to(&mut buf).unwrap();
        let back = Vocabulary::read_from(&buf[..]).unwrap();
        assert_eq!(v, back);
        assert_eq!(v.fingerprint(), back.fingerprint());
    }

    #[test]
    fn read_rejects_wrong_special_order() {
        let bad = "<unk>\t0\n<pad>\t0\n<bos>\t0\n<eos>\t0\n";
        assert!(Vocabulary::read_from(bad.as_bytes()).is_err());
    }

    #[test]
    fn fingerprint_distinguishes_different_vocabularies() {
        let a = build_vocabulary(&sentences("a b"), 1, None);
        let b = build_vocabulary(&sentences("b a"), 1, None);
        assert_ne!(a.fingerprint(), b.fingerprint());
    }
}
