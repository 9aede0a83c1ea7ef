//! Synthetic parallel corpora, the whitespace tokenizer, and prompt assembly.
//!
//! Two deterministic toy tasks stand in for real translation / formality
//! data: `cipher` rewrites every token through a seeded permutation of the
//! content vocabulary and reverses word order; `formalize` expands a fixed
//! contraction table, lowercases all-caps words, and capitalizes the
//! sentence start. Both are pure functions of (task, n, seed, vocab).
//!
//! Cipher sources are seeded random walks rather than i.i.d. tokens: each
//! step applies a fixed pairing of the content tokens (a fixed-point-free
//! involution, so walks read the same forward and backward) with
//! probability 0.8, and otherwise jumps via a table indexed by the last
//! two tokens. The structure matters twice over: a next-token pretrained
//! model only retains context features that help prediction — on random
//! text its representations would carry nothing — and the involution makes
//! the reversed target side obey the same local dynamics as the source
//! side, so the task stays decodable through a window-limited model.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const UNK: u32 = 3;

/// Number of reserved ids at the front of every vocabulary.
pub const RESERVED: u32 = 4;

const RESERVED_TOKENS: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];

/// The default closed vocabulary: 4 reserved + 64 content tokens.
///
/// The first four content tokens are prompt words; generators never sample
/// them inside sentences, which keeps prompt rendering injective.
const TOY_CONTENT: [&str; 64] = [
    // prompt words
    "cipher", "formal", "rewrite", "result",
    // sentence starters, lowercase and capitalized
    "i", "we", "you", "they", "I", "We", "You", "They",
    // contractions (informal forms)
    "wont", "WONT", "cant", "dont", "im",
    // expansion words
    "will", "not", "can", "do", "am",
    // all-caps words and their lowercase forms
    "FUNNY", "REALLY", "HAPPY", "NEVER", "funny", "really", "happy", "never",
    // verbs
    "go", "run", "see", "like", "want", "know", "think", "need", "play", "eat",
    // nouns
    "home", "food", "game", "music", "point", "day", "night", "friend", "movie", "song",
    // function words
    "and", "the", "to", "a", "some", "more", "so", "but", "with",
    // adjectives
    "good", "bad", "big", "small", "fun",
];

const STARTERS: [&str; 4] = ["i", "we", "you", "they"];
const CONTRACTIONS: [&str; 5] = ["wont", "WONT", "cant", "dont", "im"];
const ALL_CAPS_WORDS: [&str; 4] = ["FUNNY", "REALLY", "HAPPY", "NEVER"];
const VERBS: [&str; 10] = [
    "go", "run", "see", "like", "want", "know", "think", "need", "play", "eat",
];
const NOUNS: [&str; 10] = [
    "home", "food", "game", "music", "point", "day", "night", "friend", "movie", "song",
];
const FUNCTION_WORDS: [&str; 4] = ["to", "the", "a", "some"];
const ADJECTIVES: [&str; 5] = ["good", "bad", "big", "small", "fun"];

/// Fixed contraction table applied by the formalize task, in order:
/// expansion happens before all-caps lowering, so the table carries the
/// all-caps forms too.
const CONTRACTION_TABLE: [(&str, &[&str]); 5] = [
    ("wont", &["will", "not"]),
    ("WONT", &["will", "not"]),
    ("cant", &["can", "not"]),
    ("dont", &["do", "not"]),
    ("im", &["i", "am"]),
];

/// Sentence-start capitalization map.
const CAPITALIZE: [(&str, &str); 4] = [("i", "I"), ("we", "We"), ("you", "You"), ("they", "They")];

/// Closed vocabulary: a bijection between token strings and dense ids, with
/// PAD/BOS/EOS/UNK pinned at ids 0-3.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
}

impl Vocab {
    /// Vocabulary from content tokens; reserved tokens are prepended.
    pub fn with_content(content: &[&str]) -> Result<Self> {
        let mut tokens: Vec<String> = RESERVED_TOKENS.iter().map(|s| s.to_string()).collect();
        tokens.extend(content.iter().map(|s| s.to_string()));
        let mut ids = HashMap::new();
        for (i, tok) in tokens.iter().enumerate() {
            if ids.insert(tok.clone(), i as u32).is_some() {
                return Err(Error::Config(format!("duplicate vocabulary token {tok:?}")));
            }
        }
        Ok(Vocab { tokens, ids })
    }

    /// The default 68-token toy vocabulary.
    pub fn toy() -> Self {
        Vocab::with_content(&TOY_CONTENT).expect("toy vocabulary is well-formed")
    }

    pub fn size(&self) -> u32 {
        self.tokens.len() as u32
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(|s| s.as_str())
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    /// Whitespace-split lookup with UNK fallback. Empty text gives an empty
    /// sequence.
    pub fn tokenize(&self, text: &str) -> Vec<u32> {
        text.split_whitespace()
            .map(|w| self.ids.get(w).copied().unwrap_or(UNK))
            .collect()
    }

    /// Joins token strings with single spaces.
    pub fn detokenize(&self, ids: &[u32]) -> String {
        let words: Vec<&str> = ids
            .iter()
            .map(|&id| self.token(id).unwrap_or(RESERVED_TOKENS[UNK as usize]))
            .collect();
        words.join(" ")
    }
}

/// The two synthetic task families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Cipher,
    Formalize,
}

impl Task {
    pub fn parse(name: &str) -> Result<Task> {
        match name {
            "cipher" => Ok(Task::Cipher),
            "formalize" => Ok(Task::Formalize),
            other => Err(Error::Config(format!(
                "unknown task {other:?} (expected cipher or formalize)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Task::Cipher => "cipher",
            Task::Formalize => "formalize",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One source/target sentence pair, already tokenized.
#[derive(Debug, Clone, PartialEq)]
pub struct ParallelPair {
    pub id: u32,
    pub source: Vec<u32>,
    pub target: Vec<u32>,
}

/// Which of the three corpus slices a pair belongs to, decided by pair id
/// (80/10/10).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Valid,
    Test,
    All,
}

impl Split {
    pub fn parse(name: &str) -> Result<Split> {
        match name {
            "train" => Ok(Split::Train),
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            "all" => Ok(Split::All),
            other => Err(Error::Config(format!(
                "unknown split {other:?} (expected train, valid, test, or all)"
            ))),
        }
    }

    pub fn contains(&self, pair_id: u32) -> bool {
        match self {
            Split::Train => pair_id % 10 < 8,
            Split::Valid => pair_id % 10 == 8,
            Split::Test => pair_id % 10 == 9,
            Split::All => true,
        }
    }
}

/// Select the pairs of one split, preserving order.
pub fn select_split(pairs: &[ParallelPair], split: Split) -> Vec<ParallelPair> {
    pairs
        .iter()
        .filter(|p| split.contains(p.id))
        .cloned()
        .collect()
}

/// Generate `n` deterministic parallel pairs for `task`.
pub fn gen_parallel(task: Task, n: usize, seed: u64, vocab: &Vocab) -> Result<Vec<ParallelPair>> {
    if n == 0 {
        return Err(Error::Input("corpus size must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match task {
        Task::Cipher => gen_cipher(n, &mut rng, vocab),
        Task::Formalize => gen_formalize(n, &mut rng, vocab),
    }
}

/// The cipher task's token permutation over content ids, as used by
/// [`gen_parallel`] for a given seed. Exposed so tests can invert it.
pub fn cipher_permutation(seed: u64, vocab: &Vocab) -> Vec<u32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    CipherMachine::new(&mut rng, vocab).perm
}

fn sampleable_ids(vocab: &Vocab) -> Vec<u32> {
    // Content tokens minus the four prompt words.
    (RESERVED + 4..vocab.size()).collect()
}

/// Walk process for cipher sources: with probability 0.8 the next token is
/// the current token's fixed partner (an involution pairing of the pool),
/// otherwise a jump-table lookup on the last two tokens. Walks look like
/// short oscillations punctuated by jumps, regular in both directions.
struct WalkProcess {
    pool: Vec<u32>,
    partner: Vec<u32>,
    jump: Vec<Vec<u32>>,
}

impl WalkProcess {
    fn new(rng: &mut ChaCha8Rng, vocab: &Vocab) -> Self {
        let pool = sampleable_ids(vocab);
        let n = pool.len();
        // fixed-point-free involution: shuffle, then pair adjacent tokens
        let mut shuffled = pool.clone();
        shuffled.shuffle(rng);
        let base = pool[0];
        let mut partner = vec![0u32; n];
        for pair in shuffled.chunks_exact(2) {
            partner[(pair[0] - base) as usize] = pair[1];
            partner[(pair[1] - base) as usize] = pair[0];
        }
        let mut jump = Vec::with_capacity(n);
        for prev in 0..n {
            let mut row = Vec::with_capacity(n);
            for cur in 0..n {
                let pick = loop {
                    let cand = *pool.choose(rng).unwrap();
                    if cand != pool[cur] && cand != partner[cur] && cand != pool[prev] {
                        break cand;
                    }
                };
                row.push(pick);
            }
            jump.push(row);
        }
        WalkProcess {
            pool,
            partner,
            jump,
        }
    }

    fn walk(&self, rng: &mut ChaCha8Rng, len: usize) -> Vec<u32> {
        let base = self.pool[0];
        let mut out = Vec::with_capacity(len);
        let mut cur = *self.pool.choose(rng).unwrap();
        let mut prev = cur;
        out.push(cur);
        for _ in 1..len {
            let next = if rng.gen_bool(0.8) {
                self.partner[(cur - base) as usize]
            } else {
                self.jump[(prev - base) as usize][(cur - base) as usize]
            };
            prev = cur;
            cur = next;
            out.push(cur);
        }
        out
    }

    fn length(&self, rng: &mut ChaCha8Rng) -> usize {
        // geometric-ish lengths in 3..=12 keep the end-of-sentence hazard
        // spread out instead of spiking at one length
        let mut len = 3;
        while len < 12 && rng.gen_bool(0.72) {
            len += 1;
        }
        len
    }
}

/// Everything the cipher task derives from one seed: the walk process and
/// the token permutation.
///
/// The permutation maps partner pairs to other partner pairs (never to the
/// same pair), so it commutes with the walk's involution: the reversed,
/// permuted target side obeys exactly the same oscillation dynamics as the
/// source side, while no token ever maps to itself or its own partner.
struct CipherMachine {
    process: WalkProcess,
    /// Target token for each content id (indexed by id - RESERVED).
    perm: Vec<u32>,
}

impl CipherMachine {
    fn new(rng: &mut ChaCha8Rng, vocab: &Vocab) -> Self {
        let process = WalkProcess::new(rng, vocab);
        let base = process.pool[0];
        let n_pool = process.pool.len();

        // recover the partner pairs of the involution
        let mut seen = vec![false; n_pool];
        let mut pairs: Vec<(u32, u32)> = Vec::with_capacity(n_pool / 2);
        for &t in &process.pool {
            let i = (t - base) as usize;
            if !seen[i] {
                let p = process.partner[i];
                seen[i] = true;
                seen[(p - base) as usize] = true;
                pairs.push((t, p));
            }
        }

        // derangement of the pairs
        let mut target_pair: Vec<usize> = (0..pairs.len()).collect();
        loop {
            target_pair.shuffle(rng);
            if target_pair.iter().enumerate().all(|(i, &j)| i != j) {
                break;
            }
        }

        // full-content permutation: pool tokens map pairwise, the prompt
        // words rotate among themselves
        let content = vocab.size() - RESERVED;
        let mut perm: Vec<u32> = vec![0; content as usize];
        for i in 0..RESERVED {
            perm[i as usize] = RESERVED + ((i + 1) % RESERVED);
        }
        for (i, &(a, b)) in pairs.iter().enumerate() {
            let (c, d) = pairs[target_pair[i]];
            let (c, d) = if rng.gen_bool(0.5) { (c, d) } else { (d, c) };
            perm[(a - RESERVED) as usize] = c;
            perm[(b - RESERVED) as usize] = d;
        }
        CipherMachine { process, perm }
    }

    fn apply(&self, source: &[u32]) -> Vec<u32> {
        let mut target: Vec<u32> = source
            .iter()
            .map(|&t| self.perm[(t - RESERVED) as usize])
            .collect();
        target.reverse();
        target
    }
}

fn gen_cipher(n: usize, rng: &mut ChaCha8Rng, vocab: &Vocab) -> Result<Vec<ParallelPair>> {
    let machine = CipherMachine::new(rng, vocab);
    let mut pairs = Vec::with_capacity(n);
    for id in 0..n {
        let len = machine.process.length(rng);
        let source = machine.process.walk(rng, len);
        let target = machine.apply(&source);
        pairs.push(ParallelPair {
            id: id as u32,
            source,
            target,
        });
    }
    Ok(pairs)
}

fn gen_formalize(n: usize, rng: &mut ChaCha8Rng, vocab: &Vocab) -> Result<Vec<ParallelPair>> {
    let mut pairs = Vec::with_capacity(n);
    for id in 0..n {
        let words = gen_informal_words(rng);
        let source: Vec<u32> = words
            .iter()
            .map(|w| vocab.id(w).expect("generator words are in-vocabulary"))
            .collect();
        let target = formalize_rewrite(&source, vocab)?;
        pairs.push(ParallelPair {
            id: id as u32,
            source,
            target,
        });
    }
    Ok(pairs)
}

fn gen_informal_words(rng: &mut ChaCha8Rng) -> Vec<&'static str> {
    let mut words = vec![*STARTERS.choose(rng).unwrap()];
    if rng.gen_bool(0.55) {
        words.push(*CONTRACTIONS.choose(rng).unwrap());
    }
    words.push(*VERBS.choose(rng).unwrap());
    match rng.gen_range(0..4) {
        0 => {
            words.push(*FUNCTION_WORDS.choose(rng).unwrap());
            words.push(*NOUNS.choose(rng).unwrap());
        }
        1 => {
            words.push(*ADJECTIVES.choose(rng).unwrap());
            words.push(*NOUNS.choose(rng).unwrap());
        }
        2 => words.push(*ALL_CAPS_WORDS.choose(rng).unwrap()),
        _ => words.push(*NOUNS.choose(rng).unwrap()),
    }
    if rng.gen_bool(0.3) {
        words.push(*ALL_CAPS_WORDS.choose(rng).unwrap());
    }
    words
}

/// The documented formalize rewrite: contraction expansion, all-caps
/// lowering, then sentence-start capitalization.
pub fn formalize_rewrite(source: &[u32], vocab: &Vocab) -> Result<Vec<u32>> {
    let mut words: Vec<String> = Vec::with_capacity(source.len() + 2);
    for &id in source {
        let w = vocab
            .token(id)
            .ok_or_else(|| Error::Index(format!("token id {id} outside the vocabulary")))?;
        match CONTRACTION_TABLE.iter().find(|(k, _)| *k == w) {
            Some((_, expansion)) => words.extend(expansion.iter().map(|s| s.to_string())),
            None => words.push(w.to_string()),
        }
    }
    for w in words.iter_mut() {
        if w.chars().count() >= 2 && w.chars().all(|c| c.is_uppercase()) {
            *w = w.to_lowercase();
        }
    }
    if let Some(first) = words.first_mut() {
        if let Some((_, cap)) = CAPITALIZE.iter().find(|(k, _)| k == first) {
            *first = cap.to_string();
        }
    }
    Ok(words.iter().map(|w| vocab.tokenize(w)[0]).collect())
}

/// Prompt template: instruction, source cue, target cue. Rendering is
/// `instruction source-cue SOURCE target-cue`.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    pub instruction: String,
    pub source_cue: String,
    pub target_cue: String,
}

impl PromptTemplate {
    /// Default templates are bare: the toy model retains only local window
    /// features, so instruction or cue tokens would merely displace the
    /// source tail the adapter conditions on. Non-trivial templates remain
    /// fully supported for experiments.
    pub fn default_for(task: Task) -> Self {
        let _ = task;
        PromptTemplate {
            instruction: String::new(),
            source_cue: String::new(),
            target_cue: String::new(),
        }
    }

    /// Text form of the prompt; tokenizing it reproduces the assembled ids
    /// (minus BOS).
    pub fn render(&self, source: &[u32], vocab: &Vocab) -> String {
        let parts = [
            self.instruction.as_str(),
            self.source_cue.as_str(),
            &vocab.detokenize(source),
            self.target_cue.as_str(),
        ];
        parts
            .iter()
            .filter(|p| !p.is_empty())
            .cloned()
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// An assembled initial context: BOS-prefixed prompt tokens plus the source
/// token count (instruction and cues excluded), which seeds the decoding
/// schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct Prompt {
    pub tokens: Vec<u32>,
    pub source_len: usize,
}

/// Build the initial context for one source sentence.
pub fn assemble_prompt(tmpl: &PromptTemplate, source: &[u32], vocab: &Vocab) -> Result<Prompt> {
    if source.is_empty() {
        return Err(Error::Input("cannot assemble a prompt for an empty source".into()));
    }
    let mut tokens = vec![BOS];
    tokens.extend(vocab.tokenize(&tmpl.instruction));
    tokens.extend(vocab.tokenize(&tmpl.source_cue));
    tokens.extend_from_slice(source);
    tokens.extend(vocab.tokenize(&tmpl.target_cue));
    Ok(Prompt {
        tokens,
        source_len: source.len(),
    })
}

/// Write pairs as UTF-8 text, one pair per line, source TAB target.
pub fn write_corpus(path: &Path, pairs: &[ParallelPair], vocab: &Vocab) -> Result<()> {
    let mut out = String::new();
    for pair in pairs {
        out.push_str(&vocab.detokenize(&pair.source));
        out.push('\t');
        out.push_str(&vocab.detokenize(&pair.target));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Read a tab-separated corpus file; pair ids are line numbers (0-based).
pub fn read_corpus(path: &Path, vocab: &Vocab) -> Result<Vec<ParallelPair>> {
    let text = fs::read_to_string(path)?;
    let mut pairs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let (src, tgt) = match (fields.next(), fields.next(), fields.next()) {
            (Some(s), Some(t), None) => (s, t),
            _ => {
                return Err(Error::Input(format!(
                    "line {}: expected exactly one tab separator",
                    lineno + 1
                )))
            }
        };
        let source = vocab.tokenize(src);
        let target = vocab.tokenize(tgt);
        if source.is_empty() || target.is_empty() {
            return Err(Error::Input(format!(
                "line {}: empty source or target",
                lineno + 1
            )));
        }
        pairs.push(ParallelPair {
            id: lineno as u32,
            source,
            target,
        });
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_vocab_shape() {
        let v = Vocab::toy();
        assert_eq!(v.size(), 68);
        assert_eq!(v.id("<pad>"), Some(PAD));
        assert_eq!(v.id("<bos>"), Some(BOS));
        assert_eq!(v.id("<eos>"), Some(EOS));
        assert_eq!(v.id("<unk>"), Some(UNK));
        assert_eq!(v.token(4), Some("cipher"));
    }

    #[test]
    fn tokenize_empty_and_unk() {
        let v = Vocab::toy();
        assert!(v.tokenize("").is_empty());
        assert_eq!(v.tokenize("zebra"), vec![UNK]);
    }

    #[test]
    fn tokenize_round_trip() {
        let v = Vocab::toy();
        let text = "i want to go home";
        assert_eq!(v.detokenize(&v.tokenize(text)), text);
    }

    #[test]
    fn cipher_definition_single_pair() {
        let v = Vocab::toy();
        let pairs = gen_parallel(Task::Cipher, 5, 42, &v).unwrap();
        let perm = cipher_permutation(42, &v);
        for pair in &pairs {
            let mut expected: Vec<u32> = pair
                .source
                .iter()
                .map(|&t| perm[(t - RESERVED) as usize])
                .collect();
            expected.reverse();
            assert_eq!(pair.target, expected);
        }
    }

    #[test]
    fn cipher_is_invertible() {
        let v = Vocab::toy();
        let pairs = gen_parallel(Task::Cipher, 20, 3, &v).unwrap();
        let perm = cipher_permutation(3, &v);
        // invert the permutation
        let mut inv = vec![0u32; perm.len()];
        for (i, &p) in perm.iter().enumerate() {
            inv[(p - RESERVED) as usize] = i as u32 + RESERVED;
        }
        for pair in &pairs {
            let mut recovered: Vec<u32> = pair
                .target
                .iter()
                .map(|&t| inv[(t - RESERVED) as usize])
                .collect();
            recovered.reverse();
            assert_eq!(recovered, pair.source);
        }
    }

    #[test]
    fn formalize_worked_example() {
        let v = Vocab::toy();
        let source = v.tokenize("i WONT go");
        let target = formalize_rewrite(&source, &v).unwrap();
        assert_eq!(v.detokenize(&target), "I will not go");
    }

    #[test]
    fn formalize_lowers_all_caps_and_capitalizes() {
        let v = Vocab::toy();
        let source = v.tokenize("you see FUNNY");
        let target = formalize_rewrite(&source, &v).unwrap();
        assert_eq!(v.detokenize(&target), "You see funny");
    }

    #[test]
    fn generation_is_deterministic() {
        let v = Vocab::toy();
        for task in [Task::Cipher, Task::Formalize] {
            let a = gen_parallel(task, 50, 9, &v).unwrap();
            let b = gen_parallel(task, 50, 9, &v).unwrap();
            assert_eq!(a, b);
            let c = gen_parallel(task, 50, 10, &v).unwrap();
            assert_ne!(a, c);
        }
    }

    #[test]
    fn unknown_task_is_config_error() {
        assert!(Task::parse("summarize").is_err());
    }

    #[test]
    fn pairs_have_no_pad_and_nonempty_sides() {
        let v = Vocab::toy();
        for task in [Task::Cipher, Task::Formalize] {
            for pair in gen_parallel(task, 100, 1, &v).unwrap() {
                assert!(!pair.source.is_empty() && !pair.target.is_empty());
                assert!(pair.source.iter().all(|&t| t != PAD));
                assert!(pair.target.iter().all(|&t| t != PAD));
            }
        }
    }

    #[test]
    fn assemble_prompt_shape() {
        let v = Vocab::toy();
        let tmpl = PromptTemplate {
            instruction: "rewrite cipher".into(),
            source_cue: String::new(),
            target_cue: "result".into(),
        };
        let source = v.tokenize("go home now");
        let p = assemble_prompt(&tmpl, &source, &v).unwrap();
        assert_eq!(p.tokens[0], BOS);
        assert_eq!(p.source_len, 3);
        // BOS + instruction (2 tokens) + source (3) + cue (1)
        assert_eq!(p.tokens.len(), 7);
        // bare default template keeps only BOS + source
        let bare = assemble_prompt(&PromptTemplate::default_for(Task::Cipher), &source, &v).unwrap();
        assert_eq!(bare.tokens.len(), 4);
        assert_eq!(bare.source_len, 3);
    }

    #[test]
    fn assemble_prompt_empty_instruction() {
        let v = Vocab::toy();
        let tmpl = PromptTemplate {
            instruction: String::new(),
            source_cue: String::new(),
            target_cue: "result".into(),
        };
        let source = v.tokenize("go home");
        let p = assemble_prompt(&tmpl, &source, &v).unwrap();
        let mut expected = vec![BOS];
        expected.extend_from_slice(&source);
        expected.push(v.id("result").unwrap());
        assert_eq!(p.tokens, expected);
    }

    #[test]
    fn source_len_ignores_instruction() {
        let v = Vocab::toy();
        let tmpl = PromptTemplate::default_for(Task::Formalize);
        let source = v.tokenize("i dont want to eat food");
        assert_eq!(source.len(), 6);
        let p = assemble_prompt(&tmpl, &source, &v).unwrap();
        assert_eq!(p.source_len, 6);
    }

    #[test]
    fn render_then_tokenize_matches_assembled_ids() {
        let v = Vocab::toy();
        let tmpl = PromptTemplate::default_for(Task::Cipher);
        let source = v.tokenize("we like music");
        let p = assemble_prompt(&tmpl, &source, &v).unwrap();
        let rendered = tmpl.render(&source, &v);
        assert_eq!(v.tokenize(&rendered), p.tokens[1..].to_vec());
    }

    #[test]
    fn assemble_prompt_rejects_empty_source() {
        let v = Vocab::toy();
        let tmpl = PromptTemplate::default_for(Task::Cipher);
        assert!(assemble_prompt(&tmpl, &[], &v).is_err());
    }

    #[test]
    fn corpus_file_round_trip() {
        let v = Vocab::toy();
        let pairs = gen_parallel(Task::Formalize, 30, 5, &v).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.tsv");
        write_corpus(&path, &pairs, &v).unwrap();
        let loaded = read_corpus(&path, &v).unwrap();
        assert_eq!(loaded, pairs);
        // byte-identical on rewrite
        let first = std::fs::read(&path).unwrap();
        write_corpus(&path, &loaded, &v).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), first);
    }

    #[test]
    fn split_proportions() {
        let v = Vocab::toy();
        let pairs = gen_parallel(Task::Cipher, 2000, 7, &v).unwrap();
        assert_eq!(select_split(&pairs, Split::Train).len(), 1600);
        assert_eq!(select_split(&pairs, Split::Valid).len(), 200);
        assert_eq!(select_split(&pairs, Split::Test).len(), 200);
    }
}
