//! Text ingestion: vocabulary construction, sentence encoding, and the
//! random substitution distortion used by contrastive evaluation.
//!
//! Tokenization is plain whitespace splitting with no case folding. Ids are
//! assigned by descending corpus count with ties broken lexicographically, and
//! the unknown token always takes the last id.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Surface form reserved for out-of-vocabulary tokens.
pub const UNK_TOKEN: &str = "<unk>";

const VOCAB_MAGIC: &str = "#clm-vocab 1";

/// Bidirectional token/id map with occurrence counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    counts: Vec<u64>,
    unk_id: usize,
}

impl Vocab {
    /// Counts whitespace tokens in `lines` and keeps those seen at least
    /// `min_count` times. Literal `<unk>` tokens in the corpus are folded into
    /// the unknown entry, together with every token below the threshold.
    pub fn build<I, S>(lines: I, min_count: u64) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        if min_count == 0 {
            return Err(Error::InvalidConfig("min_count must be positive".into()));
        }
        let mut freq: HashMap<String, u64> = HashMap::new();
        let mut total = 0u64;
        for line in lines {
            for tok in line.as_ref().split_whitespace() {
                *freq.entry(tok.to_owned()).or_insert(0) += 1;
                total += 1;
            }
        }
        if total == 0 {
            return Err(Error::EmptyCorpus);
        }

        let mut unk_count = freq.remove(UNK_TOKEN).unwrap_or(0);
        let mut kept: Vec<(String, u64)> = Vec::with_capacity(freq.len());
        for (tok, c) in freq {
            if c >= min_count {
                kept.push((tok, c));
            } else {
                unk_count += c;
            }
        }
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

        let (mut tokens, mut counts): (Vec<String>, Vec<u64>) = kept.into_iter().unzip();
        let unk_id = tokens.len();
        tokens.push(UNK_TOKEN.to_owned());
        counts.push(unk_count);
        Ok(Self::from_parts(tokens, counts, unk_id))
    }

    fn from_parts(tokens: Vec<String>, counts: Vec<u64>, unk_id: usize) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocab {
            tokens,
            index,
            counts,
            unk_id,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Number of ids other than the unknown token.
    pub fn content_len(&self) -> usize {
        self.tokens.len() - 1
    }

    pub fn unk_id(&self) -> usize {
        self.unk_id
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn count(&self, id: usize) -> Option<u64> {
        self.counts.get(id).copied()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Maps a whitespace-tokenized line to ids, sending unknown tokens to `unk_id`.
    pub fn encode(&self, line: &str) -> Result<Sentence> {
        let ids: Vec<usize> = line
            .split_whitespace()
            .map(|t| self.id(t).unwrap_or(self.unk_id))
            .collect();
        Sentence::new(ids)
    }

    pub fn decode(&self, sentence: &Sentence) -> String {
        sentence
            .ids()
            .iter()
            .map(|&id| self.token(id).unwrap_or(UNK_TOKEN))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Encodes every non-blank line of `text`.
    pub fn encode_corpus(&self, text: &str) -> Vec<Sentence> {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| self.encode(l).expect("non-blank line has tokens"))
            .collect()
    }

    /// Text form: a magic line, the unknown id, then one `id\tcount\ttoken`
    /// row per entry in id order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{VOCAB_MAGIC}").unwrap();
        writeln!(out, "unk\t{}", self.unk_id).unwrap();
        for (id, (tok, count)) in self.tokens.iter().zip(&self.counts).enumerate() {
            writeln!(out, "{id}\t{count}\t{tok}").unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l == VOCAB_MAGIC => {}
            _ => return Err(Error::parse(1, "missing vocab header")),
        }
        let unk_id = match lines.next() {
            Some((n, l)) => {
                let v = l
                    .strip_prefix("unk\t")
                    .ok_or_else(|| Error::parse(n + 1, "expected `unk\\t<id>`"))?;
                v.parse::<usize>()
                    .map_err(|e| Error::parse(n + 1, e.to_string()))?
            }
            None => return Err(Error::parse(2, "missing unk line")),
        };

        let mut tokens = Vec::new();
        let mut counts = Vec::new();
        for (n, line) in lines {
            let mut parts = line.splitn(3, '\t');
            let (Some(id), Some(count), Some(tok)) = (parts.next(), parts.next(), parts.next())
            else {
                return Err(Error::parse(n + 1, "expected `id\\tcount\\ttoken`"));
            };
            let id: usize = id.parse().map_err(|_| Error::parse(n + 1, "bad id"))?;
            if id != tokens.len() {
                return Err(Error::parse(
                    n + 1,
                    format!("ids must be dense, found {id}"),
                ));
            }
            let count: u64 = count
                .parse()
                .map_err(|_| Error::parse(n + 1, "bad count"))?;
            if tok.is_empty() || tok.contains(char::is_whitespace) {
                return Err(Error::parse(
                    n + 1,
                    "token must be non-empty without whitespace",
                ));
            }
            tokens.push(tok.to_owned());
            counts.push(count);
        }
        if unk_id >= tokens.len() || tokens[unk_id] != UNK_TOKEN {
            return Err(Error::parse(
                2,
                "unk id does not point at the unknown token",
            ));
        }
        let vocab = Self::from_parts(tokens, counts, unk_id);
        if vocab.index.len() != vocab.tokens.len() {
            return Err(Error::parse(0, "duplicate tokens"));
        }
        Ok(vocab)
    }

    /// Hex SHA-256 of the text form; models record it to detect a mismatched vocabulary.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// A non-empty sequence of token ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Sentence(Vec<usize>);

impl Sentence {
    pub fn new(ids: Vec<usize>) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::EmptyLine);
        }
        Ok(Sentence(ids))
    }

    pub fn ids(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Fraction of positions to resample and the seed driving the choice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistortionSpec {
    level: f64,
    seed: u64,
}

impl DistortionSpec {
    pub fn new(level: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&level) {
            return Err(Error::InvalidConfig(format!(
                "distortion level {level} outside [0, 1]"
            )));
        }
        Ok(DistortionSpec { level, seed })
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Number of positions resampled at `level` for a sentence of length `n`:
/// the ceiling of `level * n`.
pub fn resample_count(level: f64, n: usize) -> usize {
    // 0.1 * 30 evaluates to 3.0000000000000004; the slack keeps exact products exact.
    let raw = (level * n as f64 - 1e-9).ceil();
    (raw.max(0.0) as usize).min(n)
}

/// Replaces `resample_count(level, |s|)` distinct positions of `s` with ids
/// drawn uniformly from the content vocabulary. Pure in `(s, spec, vocab)`.
pub fn distort(s: &Sentence, spec: &DistortionSpec, vocab: &Vocab) -> Sentence {
    let n = s.len();
    let k = resample_count(spec.level, n);
    let mut ids = s.0.clone();
    if k == 0 {
        return Sentence(ids);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let content = vocab.content_len();
    for pos in index::sample(&mut rng, n, k).into_iter() {
        ids[pos] = if content == 0 {
            vocab.unk_id()
        } else {
            let r = rng.gen_range(0..content);
            if r >= vocab.unk_id() {
                r + 1
            } else {
                r
            }
        };
    }
    Sentence(ids)
}

/// Mixes a run seed with a stream index (splitmix64 finalizer).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn build_counts_and_orders() {
        let v = Vocab::build(["a b a"], 1).unwrap();
        assert_eq!(v.len(), 3);
        assert_eq!(v.id("a"), Some(0));
        assert_eq!(v.id("b"), Some(1));
        assert_eq!(v.unk_id(), 2);
        assert_eq!(v.count(0), Some(2));
        assert_eq!(v.count(1), Some(1));
        assert_eq!(v.count(2), Some(0));
    }

    #[test]
    fn min_count_threshold() {
        let v = Vocab::build(["a b a"], 2).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v.id("b"), None);
        assert_eq!(v.count(v.unk_id()), Some(1));
    }

    #[test]
    fn ties_break_lexicographically() {
        let v = Vocab::build(["c b a", "a b c"], 1).unwrap();
        assert_eq!(v.tokens(), &["a", "b", "c", UNK_TOKEN]);
    }

    #[test]
    fn literal_unk_folds_into_unknown() {
        let v = Vocab::build(["a <unk> a <unk>"], 1).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v.count(v.unk_id()), Some(2));
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(matches!(
            Vocab::build(["", "  "], 1),
            Err(Error::EmptyCorpus)
        ));
        assert!(matches!(
            Vocab::build(Vec::<String>::new(), 1),
            Err(Error::EmptyCorpus)
        ));
        assert!(matches!(
            Vocab::build(["a"], 0),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn encode_maps_oov_to_unk() {
        let v = Vocab::build(["a b a"], 1).unwrap();
        assert_eq!(v.encode("a b").unwrap().ids(), &[0, 1]);
        assert_eq!(v.encode("a z").unwrap().ids(), &[0, 2]);
        assert_eq!(v.decode(&v.encode("a b").unwrap()), "a b");
        assert!(matches!(v.encode("   "), Err(Error::EmptyLine)));
    }

    #[test]
    fn vocab_text_round_trip_is_bit_exact() {
        let v = Vocab::build(["the cat sat on the mat", "a dog"], 1).unwrap();
        let text = v.to_text();
        let back = Vocab::from_text(&text).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.to_text(), text);
        assert_eq!(back.fingerprint(), v.fingerprint());
    }

    #[test]
    fn vocab_parse_rejects_garbage() {
        assert!(Vocab::from_text("nope").is_err());
        assert!(Vocab::from_text("#clm-vocab 1\nunk\t0\n1\t3\ta\n").is_err());
        assert!(Vocab::from_text("#clm-vocab 1\nunk\t0\n0\t3\ta\n").is_err());
    }

    #[test]
    fn level_zero_is_identity() {
        let v = Vocab::build(["a b c d e f g h i j"], 1).unwrap();
        let s = v.encode("a b c d e f g h i j").unwrap();
        let spec = DistortionSpec::new(0.0, 7).unwrap();
        assert_eq!(distort(&s, &spec, &v), s);
    }

    #[test]
    fn distortion_levels_validate() {
        assert!(DistortionSpec::new(-0.1, 0).is_err());
        assert!(DistortionSpec::new(1.1, 0).is_err());
        assert!(DistortionSpec::new(1.0, 0).is_ok());
    }

    #[test]
    fn resample_counts() {
        assert_eq!(resample_count(0.1, 10), 1);
        assert_eq!(resample_count(0.2, 10), 2);
        assert_eq!(resample_count(0.4, 10), 4);
        assert_eq!(resample_count(0.1, 30), 3);
        assert_eq!(resample_count(0.1, 3), 1);
        assert_eq!(resample_count(1.0, 7), 7);
        assert_eq!(resample_count(0.0, 7), 0);
    }

    #[test]
    fn single_draw_at_ten_percent() {
        // A one-word vocabulary plus unk: any resampled position must become
        // that word, so plant a different id everywhere and count changes.
        let v = Vocab::build(["x"], 1).unwrap();
        let s = Sentence::new(vec![v.unk_id(); 10]).unwrap();
        let spec = DistortionSpec::new(0.1, 3).unwrap();
        let out = distort(&s, &spec, &v);
        let changed = out
            .ids()
            .iter()
            .zip(s.ids())
            .filter(|(a, b)| a != b)
            .count();
        assert_eq!(changed, 1);
    }

    proptest! {
        #[test]
        fn encode_decode_identity(words in proptest::collection::vec("[a-e]{1,3}", 1..12)) {
            let line = words.join(" ");
            let v = Vocab::build([line.as_str()], 1).unwrap();
            prop_assert_eq!(v.decode(&v.encode(&line).unwrap()), line);
        }

        #[test]
        fn distortion_is_pure_and_length_preserving(
            ids in proptest::collection::vec(0usize..6, 1..20),
            level in 0.0f64..=1.0,
            seed in any::<u64>(),
        ) {
            let v = Vocab::build(["a b c d e f"], 1).unwrap();
            let unk = v.unk_id();
            // Unk never appears as a replacement, so planting it reveals every draw.
            let planted = Sentence::new(vec![unk; ids.len()]).unwrap();
            let spec = DistortionSpec::new(level, seed).unwrap();
            let a = distort(&planted, &spec, &v);
            let b = distort(&planted, &spec, &v);
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(a.len(), planted.len());
            let drawn = a.ids().iter().filter(|&&i| i != unk).count();
            prop_assert_eq!(drawn, resample_count(level, planted.len()));

            let s = Sentence::new(ids).unwrap();
            prop_assert_eq!(distort(&s, &spec, &v).len(), s.len());
        }
    }
}
