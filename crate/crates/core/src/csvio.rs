//! Small helpers shared by the CSV readers and writers.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub(crate) struct CsvInput<R: Read> {
    pub path: PathBuf,
    pub reader: csv::Reader<R>,
}

pub(crate) fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn from_reader<R: Read>(input: R, path: &Path) -> CsvInput<R> {
    let reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(input);
    CsvInput {
        path: path.to_path_buf(),
        reader,
    }
}

impl<R: Read> CsvInput<R> {
    pub fn parse_error(&self, line: u64, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line,
            message: message.into(),
        }
    }

    fn csv_error(&self, err: csv::Error) -> Error {
        let line = err.position().map(|p| p.line()).unwrap_or(0);
        match err.into_kind() {
            csv::ErrorKind::Io(e) => Error::io(&self.path, e),
            other => self.parse_error(line, format!("{other:?}")),
        }
    }

    pub fn headers(&mut self) -> Result<Vec<String>> {
        match self.reader.headers() {
            Ok(h) => Ok(h.iter().map(str::to_string).collect()),
            Err(e) => Err(self.csv_error(e)),
        }
    }

    /// Fails unless the header row starts with exactly `expected`.
    pub fn expect_header(&mut self, expected: &[&str], allow_extra: bool) -> Result<Vec<String>> {
        let header = self.headers()?;
        let prefix_ok = header.len() >= expected.len()
            && header.iter().zip(expected).all(|(h, e)| h == e);
        if !prefix_ok || (!allow_extra && header.len() != expected.len()) {
            return Err(self.parse_error(
                1,
                format!("expected header `{}`, found `{}`", expected.join(","), header.join(",")),
            ));
        }
        Ok(header)
    }

    /// Reads every record, yielding `(line, fields)`.
    pub fn records(&mut self) -> Result<Vec<(u64, Vec<String>)>> {
        let mut out = Vec::new();
        let mut record = csv::StringRecord::new();
        loop {
            match self.reader.read_record(&mut record) {
                Ok(true) => {
                    let line = record.position().map(|p| p.line()).unwrap_or(0);
                    if record.len() == 1 && record[0].is_empty() {
                        continue;
                    }
                    out.push((line, record.iter().map(str::to_string).collect()));
                }
                Ok(false) => break,
                Err(e) => return Err(self.csv_error(e)),
            }
        }
        Ok(out)
    }
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Writes `body` to `path` through a buffered writer.
pub(crate) fn write_file(path: &Path, body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    let mut out = create(path)?;
    body(&mut out).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn field<'a>(fields: &'a [String], idx: usize) -> Option<&'a str> {
    fields.get(idx).map(String::as_str)
}
