//! Byte-pair-encoding tokenizer over raw bytes.
//!
//! Text is first split into units: maximal runs of ASCII alphanumerics, and
//! every other byte on its own. Each unit starts as single-byte tokens and
//! the lowest-ranked applicable merge is applied until none remains.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

type BytePair<'a> = (&'a [u8], &'a [u8]);

pub const PAD_TOKEN: &str = "<|pad|>";
pub const EOS_TOKEN: &str = "<|endoftext|>";

#[derive(Clone, Debug)]
pub struct Tokenizer {
    /// Byte content of each ordinary token; specials have no entry.
    tokens: Vec<Option<Vec<u8>>>,
    vocab: HashMap<Vec<u8>, u32>,
    merges: Vec<(Vec<u8>, Vec<u8>)>,
    /// `(left id, right id) → (rank, merged id)`
    ranks: HashMap<(u32, u32), (usize, u32)>,
    pad_id: u32,
    eos_id: u32,
}

/// Splits into alphanumeric runs and single other bytes.
pub fn units(text: &[u8]) -> Vec<&[u8]> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < text.len() {
        let start = i;
        if text[i].is_ascii_alphanumeric() {
            while i < text.len() && text[i].is_ascii_alphanumeric() {
                i += 1;
            }
        } else {
            i += 1;
        }
        out.push(&text[start..i]);
    }
    out
}

/// Printable ASCII other than `\` as itself, `\` as `\\`, anything else as `\xHH`.
pub fn escape_bytes(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len());
    for &b in bytes {
        match b {
            b'\\' => s.push_str("\\\\"),
            0x20..=0x7e => s.push(b as char),
            _ => s.push_str(&format!("\\x{b:02x}")),
        }
    }
    s
}

pub fn unescape_bytes(s: &str) -> Result<Vec<u8>> {
    let bad = || Error::Tokenizer(format!("bad escape in token {s:?}"));
    let raw = s.as_bytes();
    let mut out = Vec::with_capacity(raw.len());
    let mut i = 0;
    while i < raw.len() {
        if raw[i] != b'\\' {
            out.push(raw[i]);
            i += 1;
            continue;
        }
        match raw.get(i + 1) {
            Some(b'\\') => {
                out.push(b'\\');
                i += 2;
            }
            Some(b'x') => {
                let hex = s.get(i + 2..i + 4).ok_or_else(bad)?;
                out.push(u8::from_str_radix(hex, 16).map_err(|_| bad())?);
                i += 4;
            }
            _ => return Err(bad()),
        }
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct TokenizerFile {
    vocab: BTreeMap<String, u32>,
    merges: Vec<(String, String)>,
    specials: BTreeMap<String, u32>,
}

impl Tokenizer {
    /// Builds a tokenizer from token byte strings (indexed by id), ordered
    /// merges and the two special ids. Checks that ids are dense and that
    /// every merge result is in the vocabulary.
    pub fn new(tokens: Vec<Option<Vec<u8>>>, merges: Vec<(Vec<u8>, Vec<u8>)>, pad_id: u32, eos_id: u32) -> Result<Self> {
        let n = tokens.len();
        for (name, id) in [("pad", pad_id), ("eos", eos_id)] {
            if id as usize >= n || tokens[id as usize].is_some() {
                return Err(Error::Tokenizer(format!("{name} id {id} is not a special slot")));
            }
        }
        if pad_id == eos_id {
            return Err(Error::Tokenizer("pad and eos ids coincide".into()));
        }
        let mut vocab = HashMap::with_capacity(n);
        for (id, t) in tokens.iter().enumerate() {
            match t {
                Some(bytes) => {
                    if bytes.is_empty() || vocab.insert(bytes.clone(), id as u32).is_some() {
                        return Err(Error::Tokenizer(format!("empty or duplicate token at id {id}")));
                    }
                }
                None if id as u32 != pad_id && id as u32 != eos_id => {
                    return Err(Error::Tokenizer(format!("id {id} has no token")));
                }
                None => {}
            }
        }
        let mut ranks = HashMap::with_capacity(merges.len());
        for (rank, (a, b)) in merges.iter().enumerate() {
            let lookup = |t: &[u8]| {
                vocab.get(t).copied().ok_or_else(|| Error::Tokenizer(format!("merge part {:?} not in vocabulary", escape_bytes(t))))
            };
            let joined = [a.as_slice(), b.as_slice()].concat();
            let (ia, ib, ij) = (lookup(a)?, lookup(b)?, lookup(&joined)?);
            ranks.entry((ia, ib)).or_insert((rank, ij));
        }
        Ok(Tokenizer { tokens, vocab, merges, ranks, pad_id, eos_id })
    }

    /// Every byte as its own token, then end-of-text (256) and padding (257).
    pub fn byte_level() -> Self {
        let mut tokens: Vec<Option<Vec<u8>>> = (0..=255u8).map(|b| Some(vec![b])).collect();
        tokens.extend([None, None]);
        Self::new(tokens, Vec::new(), 257, 256).expect("byte-level vocabulary is valid")
    }

    pub fn vocab_size(&self) -> usize {
        self.tokens.len()
    }

    pub fn pad_id(&self) -> u32 {
        self.pad_id
    }

    pub fn eos_id(&self) -> u32 {
        self.eos_id
    }

    pub fn merges(&self) -> &[(Vec<u8>, Vec<u8>)] {
        &self.merges
    }

    pub fn token_bytes(&self, id: u32) -> Option<&[u8]> {
        self.tokens.get(id as usize).and_then(|t| t.as_deref())
    }

    pub fn token_id(&self, bytes: &[u8]) -> Option<u32> {
        self.vocab.get(bytes).copied()
    }

    fn encode_unit(&self, unit: &[u8], out: &mut Vec<u32>) -> Result<()> {
        let mut ids: Vec<u32> = unit
            .iter()
            .map(|b| {
                self.vocab
                    .get(std::slice::from_ref(b))
                    .copied()
                    .ok_or_else(|| Error::Tokenizer(format!("byte 0x{b:02x} has no vocabulary entry")))
            })
            .collect::<Result<_>>()?;
        while ids.len() > 1 {
            let best = ids
                .windows(2)
                .filter_map(|w| self.ranks.get(&(w[0], w[1])).map(|&(rank, merged)| (rank, w[0], w[1], merged)))
                .min_by_key(|&(rank, ..)| rank);
            let Some((_, a, b, merged)) = best else { break };
            let mut next = Vec::with_capacity(ids.len());
            let mut i = 0;
            while i < ids.len() {
                if i + 1 < ids.len() && ids[i] == a && ids[i + 1] == b {
                    next.push(merged);
                    i += 2;
                } else {
                    next.push(ids[i]);
                    i += 1;
                }
            }
            ids = next;
        }
        out.extend(ids);
        Ok(())
    }

    pub fn encode(&self, text: &str) -> Result<Vec<u32>> {
        let mut out = Vec::with_capacity(text.len() / 2);
        for unit in units(text.as_bytes()) {
            self.encode_unit(unit, &mut out)?;
        }
        Ok(out)
    }

    /// Concatenates token bytes; special tokens decode to nothing.
    pub fn decode(&self, ids: &[u32]) -> Result<String> {
        let mut bytes = Vec::new();
        for &id in ids {
            if id == self.pad_id || id == self.eos_id {
                continue;
            }
            let t = self
                .token_bytes(id)
                .ok_or(Error::Index { index: id as usize, extent: self.tokens.len() })?;
            bytes.extend_from_slice(t);
        }
        Ok(String::from_utf8(bytes)?)
    }

    pub fn to_json(&self) -> String {
        let file = TokenizerFile {
            vocab: self
                .tokens
                .iter()
                .enumerate()
                .filter_map(|(id, t)| t.as_ref().map(|b| (escape_bytes(b), id as u32)))
                .collect(),
            merges: self.merges.iter().map(|(a, b)| (escape_bytes(a), escape_bytes(b))).collect(),
            specials: BTreeMap::from([(PAD_TOKEN.to_string(), self.pad_id), (EOS_TOKEN.to_string(), self.eos_id)]),
        };
        serde_json::to_string_pretty(&file).expect("tokenizer serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: TokenizerFile = serde_json::from_str(text).map_err(|e| Error::json("tokenizer", e))?;
        let special = |name: &str| {
            file.specials.get(name).copied().ok_or_else(|| Error::Tokenizer(format!("missing special token {name}")))
        };
        let (pad_id, eos_id) = (special(PAD_TOKEN)?, special(EOS_TOKEN)?);
        let n = file.vocab.len() + 2;
        let mut tokens: Vec<Option<Vec<u8>>> = vec![None; n];
        for (tok, &id) in &file.vocab {
            let slot = tokens.get_mut(id as usize).ok_or(Error::Index { index: id as usize, extent: n })?;
            if slot.is_some() {
                return Err(Error::Tokenizer(format!("id {id} assigned twice")));
            }
            *slot = Some(unescape_bytes(tok)?);
        }
        let merges = file
            .merges
            .iter()
            .map(|(a, b)| Ok((unescape_bytes(a)?, unescape_bytes(b)?)))
            .collect::<Result<_>>()?;
        Self::new(tokens, merges, pad_id, eos_id)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    /// Learns merges from `corpus` until the vocabulary has `vocab_size`
    /// entries or no adjacent pair is left: the base alphabet (printable ASCII, newline, tab and every
    /// byte seen in the corpus), the merges, then end-of-text and padding as
    /// the last two ids. The most frequent adjacent pair within units is
    /// merged first; ties go to the lexicographically smallest pair.
    pub fn train<S: AsRef<str>>(corpus: &[S], vocab_size: usize) -> Result<Self> {
        let mut alphabet: Vec<u8> = (0x20..=0x7e).chain(*b"\n\t").collect();
        let mut words: BTreeMap<Vec<u8>, u64> = BTreeMap::new();
        for doc in corpus {
            for unit in units(doc.as_ref().as_bytes()) {
                *words.entry(unit.to_vec()).or_default() += 1;
            }
            alphabet.extend(doc.as_ref().bytes());
        }
        alphabet.sort_unstable();
        alphabet.dedup();
        if alphabet.len() + 2 > vocab_size {
            return Err(Error::Tokenizer(format!(
                "vocabulary size {vocab_size} is smaller than the {} base tokens plus 2 specials",
                alphabet.len()
            )));
        }
        let mut tokens: Vec<Option<Vec<u8>>> = alphabet.iter().map(|&b| Some(vec![b])).collect();
        let mut segmented: Vec<(Vec<Vec<u8>>, u64)> =
            words.into_iter().map(|(w, c)| (w.iter().map(|&b| vec![b]).collect(), c)).collect();
        let mut merges = Vec::new();
        while tokens.len() + 2 < vocab_size {
            let mut counts: BTreeMap<(&[u8], &[u8]), u64> = BTreeMap::new();
            for (parts, c) in &segmented {
                for w in parts.windows(2) {
                    *counts.entry((w[0].as_slice(), w[1].as_slice())).or_default() += c;
                }
            }
            // BTreeMap iteration is ordered, so the fold keeps the first (smallest) pair on ties.
            let Some(((a, b), _)) = counts.into_iter().fold(None, |best: Option<(BytePair, u64)>, (pair, c)| match best {
                Some((_, bc)) if bc >= c => best,
                _ => Some((pair, c)),
            }) else {
                break;
            };
            let (a, b) = (a.to_vec(), b.to_vec());
            let joined = [a.as_slice(), b.as_slice()].concat();
            for (parts, _) in &mut segmented {
                let mut i = 0;
                while i + 1 < parts.len() {
                    if parts[i] == a && parts[i + 1] == b {
                        parts[i] = joined.clone();
                        parts.remove(i + 1);
                    }
                    i += 1;
                }
            }
            // The same bytes can arise from a different split; keep one id.
            if !tokens.iter().any(|t| t.as_deref() == Some(joined.as_slice())) {
                tokens.push(Some(joined));
            }
            merges.push((a, b));
        }
        let eos = tokens.len() as u32;
        tokens.extend([None, None]);
        Self::new(tokens, merges, eos + 1, eos)
    }
}
