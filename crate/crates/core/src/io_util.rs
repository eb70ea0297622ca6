use std::fs::File;
use std::io::{self, BufReader, BufWriter};
use std::path::Path;

use crate::error::Error;

pub(crate) fn open_input(path: &Path) -> Result<BufReader<File>, Error> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| Error::Input {
            path: path.to_path_buf(),
            source,
        })
}

pub(crate) fn create_output(path: &Path) -> Result<BufWriter<File>, Error> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| Error::Output {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| Error::Output {
            path: path.to_path_buf(),
            source,
        })
}

pub(crate) fn output_err(path: &Path, e: impl Into<CsvOrIo>) -> Error {
    let source = match e.into() {
        CsvOrIo::Io(e) => e,
        CsvOrIo::Csv(e) => io::Error::new(io::ErrorKind::Other, e),
    };
    Error::Output {
        path: path.to_path_buf(),
        source,
    }
}

pub(crate) enum CsvOrIo {
    Io(io::Error),
    Csv(csv::Error),
}

impl From<io::Error> for CsvOrIo {
    fn from(e: io::Error) -> Self {
        CsvOrIo::Io(e)
    }
}

impl From<csv::Error> for CsvOrIo {
    fn from(e: csv::Error) -> Self {
        CsvOrIo::Csv(e)
    }
}
