//! JSON-lines persistence. Line 1 is a header record; every following line is one
//! question.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BankError, Question, QuestionBank};
use crate::corpus::Corpus;

pub const BANK_FORMAT: &str = "lqb-bank/1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BankHeader {
    pub format: String,
    pub tool_version: String,
    pub corpus_hash: String,
    pub question_count: usize,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BankError + '_ {
    move |source| BankError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn save_bank(bank: &QuestionBank, path: impl AsRef<Path>) -> Result<(), BankError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    let header = BankHeader {
        format: BANK_FORMAT.to_string(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        corpus_hash: bank.corpus_hash.clone(),
        question_count: bank.len(),
    };
    let write = |out: &mut BufWriter<File>, line: Vec<u8>| -> std::io::Result<()> {
        out.write_all(&line)?;
        out.write_all(b"\n")
    };
    write(
        &mut out,
        serde_json::to_vec(&header).expect("header serializes"),
    )
    .map_err(io_err(path))?;
    for q in bank.questions() {
        write(
            &mut out,
            serde_json::to_vec(q).expect("question serializes"),
        )
        .map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

/// Loads a bank and re-validates every reference against `corpus`.
pub fn load_bank(path: impl AsRef<Path>, corpus: &Corpus) -> Result<QuestionBank, BankError> {
    let path = path.as_ref();
    let schema = |line: usize, message: String| BankError::Schema {
        path: path.display().to_string(),
        line,
        message,
    };
    let reader = BufReader::new(File::open(path).map_err(io_err(path))?);
    let mut lines = reader.lines().enumerate();

    let header: BankHeader = match lines.next() {
        None => return Err(schema(1, "missing header record".into())),
        Some((_, line)) => {
            let line = line.map_err(io_err(path))?;
            serde_json::from_str(&line).map_err(|e| schema(1, format!("bad header: {e}")))?
        }
    };
    if header.format != BANK_FORMAT {
        return Err(schema(
            1,
            format!("unsupported bank format {:?}", header.format),
        ));
    }
    if header.corpus_hash != corpus.hash() {
        tracing::warn!(
            bank = %header.corpus_hash,
            corpus = %corpus.hash(),
            "bank was built against a different corpus revision; re-validating scopes"
        );
    }

    let mut bank = QuestionBank::new(header.corpus_hash.clone());
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let q: Question = serde_json::from_str(&line).map_err(|e| schema(lineno, e.to_string()))?;
        bank.push(q).map_err(|e| schema(lineno, e.to_string()))?;
    }
    if bank.len() != header.question_count {
        return Err(schema(
            1,
            format!(
                "header declares {} questions, file holds {}",
                header.question_count,
                bank.len()
            ),
        ));
    }
    bank.validate_against(corpus)?;
    Ok(bank)
}
