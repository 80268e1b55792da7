//! Paired normal/anomalous prompts with random-word augmentation.
//!
//! Each training prompt is one of two fixed templates with five slots filled
//! by freshly generated random words:
//!
//! ```text
//! normal:    [w0] a [w1] photo [w2] of [w3] [n] [w4]
//! anomalous: [w5] a [w6] photo [w7] of [w8] [a] [w9]
//! ```
//!
//! `[n]` and `[a]` are the normal and anomaly words of a [`WordPair`].

use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, SeededRng, Stream};

/// Random words per prompt pair (five per template).
pub const WORDS_PER_PAIR: usize = 10;

pub const DEFAULT_ALPHABET: &str = "abcdefghijklmnopqrstuvwxyz0123456789";

/// Normal words of the word-pair grid, by slug.
pub const NORMAL_WORDS: [(&str, &str); 4] = [
    ("a", "a"),
    ("normal", "a normal"),
    ("good", "a good"),
    ("flawless", "a flawless"),
];

/// Anomaly words of the word-pair grid, by slug.
pub const ANOMALY_WORDS: [(&str, &str); 4] = [
    ("damaged", "a damaged"),
    ("broken", "a broken"),
    ("defective", "a defective"),
    ("anomalous", "an anomalous"),
];

const FILE_MAGIC: &str = "#randprompt";
const FILE_VERSION: &str = "v1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RandomWordConfigRepr", into = "RandomWordConfigRepr")]
pub struct RandomWordConfig {
    min_len: usize,
    max_len: usize,
    alphabet: Vec<char>,
    seed: u64,
}

#[derive(Serialize, Deserialize)]
struct RandomWordConfigRepr {
    min_len: usize,
    max_len: usize,
    alphabet: String,
    seed: u64,
}

impl TryFrom<RandomWordConfigRepr> for RandomWordConfig {
    type Error = Error;

    fn try_from(r: RandomWordConfigRepr) -> Result<Self> {
        RandomWordConfig::new(r.min_len, r.max_len, &r.alphabet, r.seed)
    }
}

impl From<RandomWordConfig> for RandomWordConfigRepr {
    fn from(c: RandomWordConfig) -> Self {
        RandomWordConfigRepr {
            min_len: c.min_len,
            max_len: c.max_len,
            alphabet: c.alphabet.into_iter().collect(),
            seed: c.seed,
        }
    }
}

impl RandomWordConfig {
    pub fn new(min_len: usize, max_len: usize, alphabet: &str, seed: u64) -> Result<Self> {
        if min_len < 1 || min_len > max_len {
            return Err(Error::Argument(format!(
                "word length bounds must satisfy 1 <= min <= max, got {min_len}..={max_len}"
            )));
        }
        let chars: Vec<char> = alphabet.chars().collect();
        if chars.is_empty() {
            return Err(Error::Argument("alphabet is empty".into()));
        }
        for (i, c) in chars.iter().enumerate() {
            if c.is_whitespace() || c.is_control() {
                return Err(Error::Argument(format!(
                    "alphabet contains whitespace or control character {c:?}"
                )));
            }
            if chars[..i].contains(c) {
                return Err(Error::Argument(format!("alphabet repeats {c:?}")));
            }
        }
        Ok(RandomWordConfig {
            min_len,
            max_len,
            alphabet: chars,
            seed,
        })
    }

    /// Lengths 5..=10 over lowercase letters and digits.
    pub fn with_seed(seed: u64) -> Self {
        Self::new(5, 10, DEFAULT_ALPHABET, seed).expect("default word config is valid")
    }

    pub fn min_len(&self) -> usize {
        self.min_len
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn alphabet(&self) -> &[char] {
        &self.alphabet
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The generator stream for this configuration's seed.
    pub fn rng(&self) -> SeededRng {
        rng::stream(self.seed, Stream::Prompts)
    }

    pub fn contains_word(&self, word: &str) -> bool {
        let n = word.chars().count();
        (self.min_len..=self.max_len).contains(&n) && word.chars().all(|c| self.alphabet.contains(&c))
    }
}

impl Default for RandomWordConfig {
    fn default() -> Self {
        Self::with_seed(0)
    }
}

/// Normal and anomaly words inserted at `[n]` and `[a]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct WordPair {
    normal: String,
    anomaly: String,
}

impl WordPair {
    pub fn new(normal: &str, anomaly: &str) -> Result<Self> {
        for (role, w) in [("normal", normal), ("anomaly", anomaly)] {
            if w.is_empty() {
                return Err(Error::Argument(format!("{role} word is empty")));
            }
            if w.trim() != w {
                return Err(Error::Argument(format!(
                    "{role} word {w:?} has leading or trailing whitespace"
                )));
            }
            if w.contains(['\n', '\r', ':']) {
                return Err(Error::Argument(format!(
                    "{role} word {w:?} contains a line break or ':'"
                )));
            }
        }
        Ok(WordPair {
            normal: normal.to_owned(),
            anomaly: anomaly.to_owned(),
        })
    }

    pub fn normal(&self) -> &str {
        &self.normal
    }

    pub fn anomaly(&self) -> &str {
        &self.anomaly
    }

    /// Looks up a grid pair by slugs, e.g. `("good", "broken")`.
    pub fn named(normal_slug: &str, anomaly_slug: &str) -> Result<Self> {
        let n = NORMAL_WORDS
            .iter()
            .find(|(s, _)| *s == normal_slug)
            .ok_or_else(|| Error::Argument(format!("unknown normal word {normal_slug:?}")))?;
        let a = ANOMALY_WORDS
            .iter()
            .find(|(s, _)| *s == anomaly_slug)
            .ok_or_else(|| Error::Argument(format!("unknown anomaly word {anomaly_slug:?}")))?;
        WordPair::new(n.1, a.1)
    }

    /// All 16 grid combinations, row-major over normal words.
    pub fn grid() -> Vec<WordPair> {
        NORMAL_WORDS
            .iter()
            .flat_map(|(_, n)| ANOMALY_WORDS.iter().map(move |(_, a)| WordPair::new(n, a).unwrap()))
            .collect()
    }

    /// Filesystem-friendly name: grid slugs when both words are named,
    /// otherwise the words with spaces replaced.
    pub fn slug(&self) -> String {
        let n = NORMAL_WORDS
            .iter()
            .find(|(_, w)| *w == self.normal)
            .map(|(s, _)| s.to_string())
            .unwrap_or_else(|| self.normal.replace(' ', "_"));
        let a = ANOMALY_WORDS
            .iter()
            .find(|(_, w)| *w == self.anomaly)
            .map(|(s, _)| s.to_string())
            .unwrap_or_else(|| self.anomaly.replace(' ', "_"));
        format!("{n}-{a}")
    }
}

impl Default for WordPair {
    fn default() -> Self {
        WordPair::new("a", "a damaged").unwrap()
    }
}

impl fmt::Display for WordPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.normal, self.anomaly)
    }
}

/// Accepts `NORMAL:ANOMALY` (literal words) or `SLUG-SLUG` (grid names).
impl FromStr for WordPair {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Some((n, a)) = s.split_once(':') {
            return WordPair::new(n, a);
        }
        if let Some((n, a)) = s.split_once('-') {
            return WordPair::named(n, a);
        }
        Err(Error::Argument(format!(
            "word pair {s:?} is neither NORMAL:ANOMALY nor a grid name like good-broken"
        )))
    }
}

impl TryFrom<String> for WordPair {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<WordPair> for String {
    fn from(w: WordPair) -> String {
        w.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptPair {
    pub normal: String,
    pub anomaly: String,
    pub index: usize,
}

/// Draws one word: length uniform on `min_len..=max_len`, then each character
/// uniform over the alphabet.
pub fn generate_random_word<R: Rng + ?Sized>(cfg: &RandomWordConfig, rng: &mut R) -> String {
    let len = rng.gen_range(cfg.min_len..=cfg.max_len);
    (0..len)
        .map(|_| cfg.alphabet[rng.gen_range(0..cfg.alphabet.len())])
        .collect()
}

/// Substitutes `random_words[0..5]` into the normal template and
/// `random_words[5..10]` into the anomalous one.
pub fn fill_templates<S: AsRef<str>>(
    words: &WordPair,
    random_words: &[S],
    index: usize,
) -> Result<PromptPair> {
    if random_words.len() != WORDS_PER_PAIR {
        return Err(Error::Argument(format!(
            "expected {WORDS_PER_PAIR} random words, got {}",
            random_words.len()
        )));
    }
    let w: Vec<&str> = random_words.iter().map(AsRef::as_ref).collect();
    if let Some(i) = w.iter().position(|s| s.is_empty() || s.contains(char::is_whitespace)) {
        return Err(Error::Argument(format!(
            "random word w{i} is empty or contains whitespace"
        )));
    }
    Ok(PromptPair {
        normal: format!("{} a {} photo {} of {} {} {}", w[0], w[1], w[2], w[3], words.normal, w[4]),
        anomaly: format!("{} a {} photo {} of {} {} {}", w[5], w[6], w[7], w[8], words.anomaly, w[9]),
        index,
    })
}

/// Generates `n_pairs` prompt pairs from one stream seeded by `cfg.seed`.
///
/// Words are drawn in slot order w0..w9 within a pair and pairs in index
/// order, so the first `k` pairs of a larger set equal the set of size `k`.
pub fn generate_prompt_set(
    cfg: &RandomWordConfig,
    words: &WordPair,
    n_pairs: usize,
) -> Result<PromptSet> {
    if n_pairs == 0 {
        return Err(Error::Argument("n_pairs must be at least 1".into()));
    }
    let mut rng = cfg.rng();
    let mut pairs = Vec::with_capacity(n_pairs);
    let mut slot = Vec::with_capacity(WORDS_PER_PAIR);
    for index in 0..n_pairs {
        slot.clear();
        slot.extend((0..WORDS_PER_PAIR).map(|_| generate_random_word(cfg, &mut rng)));
        pairs.push(fill_templates(words, &slot, index)?);
    }
    Ok(PromptSet {
        seed: cfg.seed,
        pairs,
    })
}

/// The untrained guide prompts `a photo of [n] object` / `a photo of [a] object`.
///
/// With a known category, its name replaces `object`.
pub fn guide_prompts(words: &WordPair, category: Option<&str>) -> PromptPair {
    let object = category.map(|c| c.replace('_', " ")).unwrap_or_else(|| "object".into());
    PromptPair {
        normal: format!("a photo of {} {object}", words.normal),
        anomaly: format!("a photo of {} {object}", words.anomaly),
        index: 0,
    }
}

/// An ordered collection of prompt pairs plus the seed that produced it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    pub seed: u64,
    pub pairs: Vec<PromptPair>,
}

impl PromptSet {
    pub fn from_pairs(seed: u64, pairs: Vec<PromptPair>) -> Self {
        PromptSet { seed, pairs }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Header line, then each normal prompt followed by its anomalous partner.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{FILE_MAGIC} {FILE_VERSION} seed={} n={}", self.seed, self.pairs.len())?;
        for p in &self.pairs {
            writeln!(w, "{}", p.normal)?;
            writeln!(w, "{}", p.anomaly)?;
        }
        w.flush()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(BufWriter::new(f)).map_err(|e| Error::io(path, e))
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("prompt file is empty".into()))?
            .map_err(|e| Error::Format(e.to_string()))?;
        let (seed, n) = parse_header(&header)?;
        let mut pairs = Vec::with_capacity(n);
        for index in 0..n {
            let mut next = || -> Result<String> {
                lines
                    .next()
                    .ok_or_else(|| {
                        Error::Corruption(format!("prompt file ends before pair {index} of {n}"))
                    })?
                    .map_err(|e| Error::Format(e.to_string()))
            };
            let normal = next()?;
            let anomaly = next()?;
            pairs.push(PromptPair {
                normal,
                anomaly,
                index,
            });
        }
        for extra in lines {
            if !extra.map_err(|e| Error::Format(e.to_string()))?.is_empty() {
                return Err(Error::Corruption(format!("prompt file has more than {n} pairs")));
            }
        }
        Ok(PromptSet { seed, pairs })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(BufReader::new(f))
    }
}

fn parse_header(line: &str) -> Result<(u64, usize)> {
    let bad = || Error::Format(format!("bad prompt file header {line:?}"));
    let mut parts = line.split_ascii_whitespace();
    if parts.next() != Some(FILE_MAGIC) {
        return Err(bad());
    }
    match parts.next() {
        Some(FILE_VERSION) => {}
        Some(v) => return Err(Error::Format(format!("unsupported prompt file version {v}"))),
        None => return Err(bad()),
    }
    let seed = parts
        .next()
        .and_then(|s| s.strip_prefix("seed="))
        .and_then(|s| s.parse().ok())
        .ok_or_else(bad)?;
    let n = parts
        .next()
        .and_then(|s| s.strip_prefix("n="))
        .and_then(|s| s.parse().ok())
        .ok_or_else(bad)?;
    if parts.next().is_some() {
        return Err(bad());
    }
    Ok((seed, n))
}
