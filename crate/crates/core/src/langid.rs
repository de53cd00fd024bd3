//! Short-text language identification by character trigram rank profiles.
//!
//! This is a baseline: n-gram identifiers are known to struggle on very
//! short, noisy texts. Anything that implements [`Identifier`] can replace it
//! in the loader.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::codec::{put_u32, put_u8, Reader};
use crate::error::{Error, Result};
use crate::model::Lang;

pub const PROFILE_MAGIC: &[u8; 4] = b"TWLP";
pub const MAX_PROFILE_LEN: usize = 3000;
pub const MIN_CORPUS_BYTES: usize = 10_000;
/// Texts shorter than this many code points are not classified.
pub const MIN_TEXT_CHARS: usize = 8;
pub const MIN_CONFIDENCE: f64 = 0.1;
const BOUNDARY: char = '_';

const SEED_CORPORA: [(&str, &str); 4] = [
    ("de", include_str!("../data/langid/de.txt")),
    ("en", include_str!("../data/langid/en.txt")),
    ("es", include_str!("../data/langid/es.txt")),
    ("fr", include_str!("../data/langid/fr.txt")),
];

/// Anything that can label a text with a language.
pub trait Identifier: Send + Sync {
    fn identify(&self, text: &str) -> Result<(Lang, f64)>;
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LanguageProfile {
    pub lang: Lang,
    /// Trigrams in rank order; rank of `ranked[i]` is `i + 1`.
    ranked: Vec<String>,
    ranks: HashMap<String, u32>,
}

impl LanguageProfile {
    fn from_ranked(lang: Lang, ranked: Vec<String>) -> Self {
        let ranks = ranked.iter().enumerate().map(|(i, t)| (t.clone(), i as u32 + 1)).collect();
        LanguageProfile { lang, ranked, ranks }
    }

    pub fn len(&self) -> usize {
        self.ranked.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranked.is_empty()
    }

    pub fn rank(&self, trigram: &str) -> Option<u32> {
        self.ranks.get(trigram).copied()
    }

    pub fn trigrams(&self) -> &[String] {
        &self.ranked
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(PROFILE_MAGIC);
        let code = self.lang.as_str();
        put_u8(&mut out, code.len() as u8);
        out.extend_from_slice(code.as_bytes());
        put_u32(&mut out, self.ranked.len() as u32);
        for (i, t) in self.ranked.iter().enumerate() {
            put_u32(&mut out, t.len() as u32);
            out.extend_from_slice(t.as_bytes());
            put_u32(&mut out, i as u32 + 1);
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader::new(buf);
        if r.bytes(4)? != PROFILE_MAGIC {
            return Err(Error::Format("bad magic, expected TWLP".into()));
        }
        let n = r.u8()? as usize;
        let code = std::str::from_utf8(r.bytes(n)?).map_err(|_| Error::Format("language code not UTF-8".into()))?;
        let lang = Lang::new(code)?;
        let count = r.u32()? as usize;
        if count > MAX_PROFILE_LEN {
            return Err(Error::Format(format!("profile holds {count} trigrams, limit {MAX_PROFILE_LEN}")));
        }
        let mut slots: Vec<Option<String>> = vec![None; count];
        for _ in 0..count {
            let t = r.string()?;
            let rank = r.u32()? as usize;
            if rank == 0 || rank > count || slots[rank - 1].is_some() {
                return Err(Error::Format(format!("ranks are not a permutation of 1..{count}")));
            }
            slots[rank - 1] = Some(t);
        }
        if !r.is_empty() {
            return Err(Error::Format("trailing bytes after profile".into()));
        }
        Ok(LanguageProfile::from_ranked(lang, slots.into_iter().map(|s| s.expect("filled")).collect()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(Error::at(path))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        LanguageProfile::from_bytes(&fs::read(path).map_err(Error::at(path))?)
    }
}

/// Case-folded trigrams of each word padded with boundary markers. Anything
/// that is not a letter separates words.
pub fn trigrams(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut word: Vec<char> = vec![BOUNDARY];
    let flush = |word: &mut Vec<char>, out: &mut Vec<String>| {
        if word.len() > 1 {
            word.push(BOUNDARY);
            for w in word.windows(3) {
                out.push(w.iter().collect());
            }
        }
        word.clear();
        word.push(BOUNDARY);
    };
    for c in text.chars() {
        if c.is_alphabetic() {
            word.extend(c.to_lowercase());
        } else {
            flush(&mut word, &mut out);
        }
    }
    flush(&mut word, &mut out);
    out
}

/// Trigrams by descending frequency, ties in lexicographic order.
fn ranked_trigrams(text: &str, limit: usize) -> Vec<String> {
    let mut counts: HashMap<String, u64> = HashMap::new();
    for t in trigrams(text) {
        *counts.entry(t).or_default() += 1;
    }
    let mut v: Vec<(String, u64)> = counts.into_iter().collect();
    v.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v.truncate(limit);
    v.into_iter().map(|(t, _)| t).collect()
}

pub fn train_profile(corpus: &str, lang: &str) -> Result<LanguageProfile> {
    if corpus.len() < MIN_CORPUS_BYTES {
        return Err(Error::CorpusTooSmall { got: corpus.len(), need: MIN_CORPUS_BYTES });
    }
    Ok(LanguageProfile::from_ranked(Lang::new(lang)?, ranked_trigrams(corpus, MAX_PROFILE_LEN)))
}

/// Rank-order ("out of place") classifier over a set of profiles.
#[derive(Clone, Debug, Default)]
pub struct LanguageId {
    profiles: Vec<LanguageProfile>,
}

impl LanguageId {
    pub fn new(mut profiles: Vec<LanguageProfile>) -> Self {
        profiles.sort_by_key(|a| a.lang);
        LanguageId { profiles }
    }

    /// Profiles trained on the bundled English, German, French and Spanish
    /// prose.
    pub fn seeded() -> Self {
        LanguageId::new(
            SEED_CORPORA
                .iter()
                .map(|(code, text)| train_profile(text, code).expect("bundled corpora are large enough"))
                .collect(),
        )
    }

    /// Load every `*.twlp` file in a directory.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mut profiles = Vec::new();
        let mut entries: Vec<_> = fs::read_dir(dir)
            .map_err(Error::at(dir))?
            .collect::<std::io::Result<Vec<_>>>()
            .map_err(Error::at(dir))?;
        entries.sort_by_key(|e| e.path());
        for e in entries {
            let p = e.path();
            if p.extension().is_some_and(|x| x == "twlp") {
                profiles.push(LanguageProfile::load(&p)?);
            }
        }
        Ok(LanguageId::new(profiles))
    }

    pub fn profiles(&self) -> &[LanguageProfile] {
        &self.profiles
    }

    fn distance(profile: &LanguageProfile, text_ranked: &[String]) -> u64 {
        let penalty = MAX_PROFILE_LEN as u64;
        text_ranked
            .iter()
            .enumerate()
            .map(|(i, t)| match profile.rank(t) {
                Some(r) => (r as i64 - (i as i64 + 1)).unsigned_abs(),
                None => penalty,
            })
            .sum()
    }

    /// Best language and a confidence in [0, 1]: the relative margin of the
    /// runner-up distance over the best one. `und` below the length or
    /// confidence floor.
    pub fn identify(&self, text: &str) -> Result<(Lang, f64)> {
        if self.profiles.is_empty() {
            return Err(Error::NoProfiles);
        }
        if text.chars().count() < MIN_TEXT_CHARS {
            return Ok((Lang::UND, 0.0));
        }
        let ranked = ranked_trigrams(text, MAX_PROFILE_LEN);
        if ranked.is_empty() {
            return Ok((Lang::UND, 0.0));
        }
        let mut scored: Vec<(u64, Lang)> =
            self.profiles.iter().map(|p| (LanguageId::distance(p, &ranked), p.lang)).collect();
        scored.sort();
        let (best, lang) = scored[0];
        let confidence = match scored.get(1) {
            Some(&(second, _)) if second > 0 => (second - best) as f64 / second as f64,
            Some(_) => 0.0,
            None => {
                let worst = ranked.len() as u64 * MAX_PROFILE_LEN as u64;
                1.0 - best as f64 / worst as f64
            }
        };
        if confidence < MIN_CONFIDENCE {
            return Ok((Lang::UND, confidence));
        }
        Ok((lang, confidence))
    }
}

impl Identifier for LanguageId {
    fn identify(&self, text: &str) -> Result<(Lang, f64)> {
        LanguageId::identify(self, text)
    }
}
