//! The external memory: (context representation, target token) records.
//!
//! For every training pair the initial prompt is encoded, the pair's first
//! target token recorded against the resulting representation, and the
//! context extended — by the model's own predicted token in `predicted` mode
//! (the default) or by the gold target token in `teacher` mode. Generation
//! always runs exactly as many steps as there are target tokens, even when
//! the model predicts EOS early, so every target position gets a record.
//!
//! Storage truth is little-endian f32; training upcasts to f64.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use crate::binio::{Reader, Writer};
use crate::corpus::{assemble_prompt, ParallelPair, PromptTemplate, Vocab};
use crate::error::{Error, Result};
use crate::plm::PlmWeights;

pub const MEMORY_MAGIC: &[u8; 4] = b"PEMA";
pub const MEMORY_VERSION: u16 = 1;

/// How contexts are extended during the build loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MemoryMode {
    /// Extend with the model's predicted token (the default behavior).
    Predicted,
    /// Extend with the gold target token; isolates exposure-bias effects.
    Teacher,
}

impl MemoryMode {
    pub fn parse(name: &str) -> Result<MemoryMode> {
        match name {
            "predicted" => Ok(MemoryMode::Predicted),
            "teacher" => Ok(MemoryMode::Teacher),
            other => Err(Error::Config(format!(
                "unknown memory mode {other:?} (expected predicted or teacher)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MemoryMode::Predicted => "predicted",
            MemoryMode::Teacher => "teacher",
        }
    }

    fn to_u8(self) -> u8 {
        match self {
            MemoryMode::Predicted => 0,
            MemoryMode::Teacher => 1,
        }
    }

    fn from_u8(v: u8, offset: u64) -> Result<MemoryMode> {
        match v {
            0 => Ok(MemoryMode::Predicted),
            1 => Ok(MemoryMode::Teacher),
            other => Err(Error::Format {
                offset,
                message: format!("unknown memory mode byte {other}"),
            }),
        }
    }
}

/// One (f(c_i), y_i) pair with its position metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextRecord {
    /// f(c_i), stored at f32 precision (the storage truth).
    pub representation: Vec<f32>,
    /// The desired target token y_i — always the gold token, never the
    /// prediction.
    pub target: u32,
    pub sentence_id: u32,
    /// 1-based position inside the sentence.
    pub position: u16,
    /// Total target tokens of the sentence.
    pub sentence_len: u16,
}

/// The whole memory plus the header fields it is persisted with.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalMemory {
    pub d: u32,
    pub v: u32,
    pub mode: MemoryMode,
    pub records: Vec<ContextRecord>,
}

impl ExternalMemory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Record representation upcast to f64.
    pub fn repr_f64(&self, idx: usize) -> Vec<f64> {
        self.records[idx]
            .representation
            .iter()
            .map(|&x| x as f64)
            .collect()
    }
}

/// Build the memory by running the iterative prediction loop over every
/// pair. Pairs with an empty target are skipped with a logged warning.
pub fn build_memory(
    plm: &PlmWeights,
    template: &PromptTemplate,
    pairs: &[ParallelPair],
    vocab: &Vocab,
    mode: MemoryMode,
) -> Result<ExternalMemory> {
    if !plm.is_frozen() {
        return Err(Error::Contract(
            "memory can only be built over a frozen model".into(),
        ));
    }
    if pairs.is_empty() {
        return Err(Error::Input("cannot build a memory from zero pairs".into()));
    }
    let mut records = Vec::new();
    for pair in pairs {
        if pair.target.is_empty() {
            log::warn!("skipping pair {}: empty target", pair.id);
            continue;
        }
        build_sentence(plm, template, pair, vocab, mode, &mut records)?;
    }
    Ok(ExternalMemory {
        d: plm.d() as u32,
        v: plm.v() as u32,
        mode,
        records,
    })
}

/// Append the records of one pair; exactly `target.len()` of them.
pub(crate) fn build_sentence(
    plm: &PlmWeights,
    template: &PromptTemplate,
    pair: &ParallelPair,
    vocab: &Vocab,
    mode: MemoryMode,
    records: &mut Vec<ContextRecord>,
) -> Result<()> {
    let t = pair.target.len();
    let mut context = assemble_prompt(template, &pair.source, vocab)?.tokens;
    for (i, &gold) in pair.target.iter().enumerate() {
        let enc = plm.encode(&context)?;
        records.push(ContextRecord {
            representation: enc.repr.iter().map(|&x| x as f32).collect(),
            target: gold,
            sentence_id: pair.id,
            position: (i + 1) as u16,
            sentence_len: t as u16,
        });
        let next = match mode {
            MemoryMode::Predicted => enc.predicted,
            MemoryMode::Teacher => gold,
        };
        context.push(next);
    }
    Ok(())
}

/// Write the memory: magic, version u16, mode u8, (d, v) u32, record count
/// u64, then each record as d×f32, u32 target, u32 sentence id, u16
/// position, u16 sentence length. All little-endian.
pub fn write_memory(memory: &ExternalMemory, path: &Path) -> Result<()> {
    let file = File::create(path)?;
    let mut out = Writer::new(BufWriter::new(file));
    out.bytes(MEMORY_MAGIC)?;
    out.u16(MEMORY_VERSION)?;
    out.u8(memory.mode.to_u8())?;
    out.u32(memory.d)?;
    out.u32(memory.v)?;
    out.u64(memory.records.len() as u64)?;
    for rec in &memory.records {
        if rec.representation.len() != memory.d as usize {
            return Err(Error::Dimension(format!(
                "record of width {} in a d={} memory",
                rec.representation.len(),
                memory.d
            )));
        }
        out.f32_raw(&rec.representation)?;
        out.u32(rec.target)?;
        out.u32(rec.sentence_id)?;
        out.u16(rec.position)?;
        out.u16(rec.sentence_len)?;
    }
    out.flush()
}

/// Header of a memory file, read without touching the records.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemoryHeader {
    pub mode: MemoryMode,
    pub d: u32,
    pub v: u32,
    pub count: u64,
}

/// Streaming reader: yields records one at a time without loading the file.
pub struct MemoryReader {
    reader: Reader<BufReader<File>>,
    header: MemoryHeader,
    read: u64,
}

impl MemoryReader {
    pub fn open(path: &Path) -> Result<Self> {
        let file = File::open(path)?;
        let mut r = Reader::new(BufReader::new(file));
        r.magic(MEMORY_MAGIC)?;
        let version_at = r.offset();
        let version = r.u16("version")?;
        if version != MEMORY_VERSION {
            return Err(Error::Format {
                offset: version_at,
                message: format!("unsupported version {version}, expected {MEMORY_VERSION}"),
            });
        }
        let mode_at = r.offset();
        let mode = MemoryMode::from_u8(r.u8("mode")?, mode_at)?;
        let d = r.u32("d")?;
        let v = r.u32("v")?;
        let count = r.u64("record count")?;
        Ok(MemoryReader {
            reader: r,
            header: MemoryHeader { mode, d, v, count },
            read: 0,
        })
    }

    /// Open and require a specific representation width.
    pub fn open_expecting(path: &Path, d: u32) -> Result<Self> {
        let me = Self::open(path)?;
        if me.header.d != d {
            return Err(Error::Format {
                // d sits after magic(4) + version(2) + mode(1)
                offset: 7,
                message: format!("memory has d={}, expected d={d}", me.header.d),
            });
        }
        Ok(me)
    }

    pub fn header(&self) -> MemoryHeader {
        self.header
    }

    fn read_record(&mut self) -> Result<ContextRecord> {
        let d = self.header.d as usize;
        let representation = self.reader.f32_raw(d, "record representation")?;
        let target = self.reader.u32("record target")?;
        let sentence_id = self.reader.u32("record sentence id")?;
        let position = self.reader.u16("record position")?;
        let sentence_len = self.reader.u16("record sentence length")?;
        if position == 0 || position > sentence_len {
            return Err(Error::Format {
                offset: self.reader.offset(),
                message: format!(
                    "record position {position} outside 1..={sentence_len}"
                ),
            });
        }
        Ok(ContextRecord {
            representation,
            target,
            sentence_id,
            position,
            sentence_len,
        })
    }
}

impl Iterator for MemoryReader {
    type Item = Result<ContextRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.read >= self.header.count {
            return None;
        }
        self.read += 1;
        Some(self.read_record())
    }
}

/// Read a whole memory file into memory.
pub fn read_memory(path: &Path) -> Result<ExternalMemory> {
    let mut reader = MemoryReader::open(path)?;
    let header = reader.header();
    let mut records = Vec::with_capacity(header.count as usize);
    for rec in reader.by_ref() {
        records.push(rec?);
    }
    reader.reader.expect_eof()?;
    Ok(ExternalMemory {
        d: header.d,
        v: header.v,
        mode: header.mode,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{gen_parallel, PromptTemplate, Task, Vocab};
    use crate::plm::{train_plm, PlmConfig};

    fn setup() -> (PlmWeights, Vocab, Vec<ParallelPair>, PromptTemplate) {
        let vocab = Vocab::toy();
        let pairs = gen_parallel(Task::Cipher, 12, 7, &vocab).unwrap();
        let config = PlmConfig {
            d: 16,
            k: 4,
            hidden: 24,
            epochs: 2,
            seed: 3,
            ..PlmConfig::default()
        };
        let plm = train_plm(&pairs, &vocab, &config).unwrap();
        let template = PromptTemplate::default_for(Task::Cipher);
        (plm, vocab, pairs, template)
    }

    #[test]
    fn one_record_per_target_token() {
        let (plm, vocab, _, template) = setup();
        let pair = ParallelPair {
            id: 0,
            source: vocab.tokenize("go home now"),
            target: vocab.tokenize("day good fun"),
        };
        let mem = build_memory(&plm, &template, &[pair], &vocab, MemoryMode::Predicted).unwrap();
        assert_eq!(mem.len(), 3);
        for (i, rec) in mem.records.iter().enumerate() {
            assert_eq!(rec.position as usize, i + 1);
            assert_eq!(rec.sentence_len, 3);
            assert_eq!(rec.sentence_id, 0);
        }
    }

    #[test]
    fn record_count_is_total_target_tokens() {
        let (plm, vocab, pairs, template) = setup();
        let mem = build_memory(&plm, &template, &pairs, &vocab, MemoryMode::Predicted).unwrap();
        let expected: usize = pairs.iter().map(|p| p.target.len()).sum();
        assert_eq!(mem.len(), expected);
    }

    #[test]
    fn teacher_mode_matches_replay_oracle() {
        let (plm, vocab, pairs, template) = setup();
        let mem = build_memory(&plm, &template, &pairs, &vocab, MemoryMode::Teacher).unwrap();
        // Replay: representation at position i equals encoding of
        // prompt ++ gold prefix, recomputed from scratch.
        let pair = &pairs[3];
        let prompt = assemble_prompt(&template, &pair.source, &vocab).unwrap().tokens;
        for (i, _) in pair.target.iter().enumerate() {
            let mut ctx = prompt.clone();
            ctx.extend_from_slice(&pair.target[..i]);
            let enc = plm.encode(&ctx).unwrap();
            let expect: Vec<f32> = enc.repr.iter().map(|&x| x as f32).collect();
            let rec = mem
                .records
                .iter()
                .find(|r| r.sentence_id == pair.id && r.position as usize == i + 1)
                .unwrap();
            assert_eq!(rec.representation, expect);
        }
    }

    #[test]
    fn predicted_mode_replay_is_self_consistent() {
        let (plm, vocab, pairs, template) = setup();
        let mem = build_memory(&plm, &template, &pairs, &vocab, MemoryMode::Predicted).unwrap();
        // Replay the predicted-token loop independently for one pair.
        let pair = &pairs[0];
        let mut ctx = assemble_prompt(&template, &pair.source, &vocab).unwrap().tokens;
        for i in 0..pair.target.len() {
            let enc = plm.encode(&ctx).unwrap();
            let expect: Vec<f32> = enc.repr.iter().map(|&x| x as f32).collect();
            let rec = mem
                .records
                .iter()
                .find(|r| r.sentence_id == pair.id && r.position as usize == i + 1)
                .unwrap();
            assert_eq!(rec.representation, expect);
            ctx.push(enc.predicted);
        }
    }

    #[test]
    fn targets_are_gold_even_when_predictions_differ() {
        let (plm, vocab, pairs, template) = setup();
        let mem = build_memory(&plm, &template, &pairs, &vocab, MemoryMode::Predicted).unwrap();
        let mut idx = 0;
        for pair in &pairs {
            for &gold in &pair.target {
                assert_eq!(mem.records[idx].target, gold);
                idx += 1;
            }
        }
    }

    #[test]
    fn empty_target_pairs_are_skipped() {
        let (plm, vocab, _, template) = setup();
        let pairs = vec![
            ParallelPair {
                id: 0,
                source: vocab.tokenize("go"),
                target: vec![],
            },
            ParallelPair {
                id: 1,
                source: vocab.tokenize("go home"),
                target: vocab.tokenize("fun day"),
            },
        ];
        let mem = build_memory(&plm, &template, &pairs, &vocab, MemoryMode::Predicted).unwrap();
        assert_eq!(mem.len(), 2);
        assert!(mem.records.iter().all(|r| r.sentence_id == 1));
    }

    #[test]
    fn unfrozen_model_is_rejected() {
        let (_, vocab, pairs, template) = setup();
        let unfrozen = crate::plm::PlmWeights::init(&PlmConfig {
            d: 16,
            k: 4,
            hidden: 24,
            ..PlmConfig::default()
        })
        .unwrap();
        match build_memory(&unfrozen, &template, &pairs, &vocab, MemoryMode::Predicted) {
            Err(Error::Contract(_)) => {}
            other => panic!("expected contract error, got {other:?}"),
        }
    }

    #[test]
    fn file_round_trip_bit_exact() {
        let (plm, vocab, pairs, template) = setup();
        let mem = build_memory(&plm, &template, &pairs, &vocab, MemoryMode::Predicted).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("m1.pema");
        let p2 = dir.path().join("m2.pema");
        write_memory(&mem, &p1).unwrap();
        let loaded = read_memory(&p1).unwrap();
        assert_eq!(loaded, mem);
        write_memory(&loaded, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn identical_builds_identical_files() {
        let (plm, vocab, pairs, template) = setup();
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.pema");
        let p2 = dir.path().join("b.pema");
        let m1 = build_memory(&plm, &template, &pairs, &vocab, MemoryMode::Predicted).unwrap();
        let m2 = build_memory(&plm, &template, &pairs, &vocab, MemoryMode::Predicted).unwrap();
        write_memory(&m1, &p1).unwrap();
        write_memory(&m2, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn declared_count_beyond_stored_records_is_truncation_error() {
        let (plm, vocab, pairs, template) = setup();
        let mem = build_memory(&plm, &template, &pairs[..2], &vocab, MemoryMode::Predicted).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.pema");
        write_memory(&mem, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        // bump the declared record count (offset 15: magic 4 + version 2 +
        // mode 1 + d 4 + v 4)
        let count = u64::from_le_bytes(bytes[15..23].try_into().unwrap());
        bytes[15..23].copy_from_slice(&(count + 1).to_le_bytes());
        std::fs::write(&path, &bytes).unwrap();
        match read_memory(&path) {
            Err(Error::Format { offset, .. }) => assert!(offset >= 23),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn streaming_reader_matches_bulk_read() {
        let (plm, vocab, pairs, template) = setup();
        let mem = build_memory(&plm, &template, &pairs, &vocab, MemoryMode::Predicted).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.pema");
        write_memory(&mem, &path).unwrap();
        let reader = MemoryReader::open(&path).unwrap();
        assert_eq!(reader.header().count as usize, mem.len());
        let streamed: Vec<ContextRecord> = reader.map(|r| r.unwrap()).collect();
        assert_eq!(streamed, mem.records);
    }

    #[test]
    fn open_expecting_rejects_other_d() {
        let (plm, vocab, pairs, template) = setup();
        let mem = build_memory(&plm, &template, &pairs, &vocab, MemoryMode::Predicted).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.pema");
        write_memory(&mem, &path).unwrap();
        match MemoryReader::open_expecting(&path, mem.d + 1) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 7),
            other => panic!("expected format error, got {:?}", other.map(|_| ())),
        }
    }
}
