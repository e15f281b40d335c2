use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use crate::failure::{io_err, Failure};

/// A buffered file, or stdout when no path is given.
pub enum Sink {
    File(BufWriter<File>),
    Stdout(io::Stdout),
}

impl Sink {
    pub fn open(path: Option<&Path>) -> Result<Self, Failure> {
        Ok(match path {
            Some(p) => {
                if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                    std::fs::create_dir_all(dir).map_err(io_err(format!("cannot create {}", dir.display())))?;
                }
                Sink::File(BufWriter::new(File::create(p).map_err(io_err(format!("cannot create {}", p.display())))?))
            }
            None => Sink::Stdout(io::stdout()),
        })
    }

    pub fn finish(mut self) -> Result<(), Failure> {
        self.flush().map_err(io_err("cannot flush output"))
    }
}

impl Write for Sink {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        match self {
            Sink::File(f) => f.write(buf),
            Sink::Stdout(s) => s.write(buf),
        }
    }

    fn flush(&mut self) -> io::Result<()> {
        match self {
            Sink::File(f) => f.flush(),
            Sink::Stdout(s) => s.flush(),
        }
    }
}
