use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;
use std::str::FromStr;

use super::{EventRecord, Polarity};
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 4] = ["t_us", "x", "y", "p"];
pub const EVT_RECORD_BYTES: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EventFormat {
    Csv,
    Evt,
}

impl EventFormat {
    /// Guess from a file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        path.extension().and_then(|e| e.to_str()).and_then(|e| e.parse().ok())
    }
}

impl FromStr for EventFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(EventFormat::Csv),
            "evt" => Ok(EventFormat::Evt),
            _ => Err(Error::parse(format!("'{s}'"), "unknown event format (csv or evt)")),
        }
    }
}

/// Streaming event reader. Yields one record at a time; errors carry the line
/// (csv) or byte offset (evt) of the offending record.
pub struct EventReader {
    inner: Inner,
}

enum Inner {
    Csv {
        reader: csv::Reader<Box<dyn Read>>,
        record: csv::StringRecord,
    },
    Evt {
        reader: Box<dyn Read>,
        offset: u64,
    },
}

impl EventReader {
    pub fn new<R: Read + 'static>(reader: R, format: EventFormat) -> Result<Self> {
        let reader: Box<dyn Read> = Box::new(reader);
        let inner = match format {
            EventFormat::Csv => {
                let mut reader = csv::ReaderBuilder::new().has_headers(false).from_reader(reader);
                let mut header = csv::StringRecord::new();
                if !reader.read_record(&mut header)? || header.iter().ne(CSV_HEADER) {
                    return Err(Error::parse(
                        "line 1",
                        format!("csv header must be exactly `{}`", CSV_HEADER.join(",")),
                    ));
                }
                Inner::Csv {
                    reader,
                    record: csv::StringRecord::new(),
                }
            }
            EventFormat::Evt => Inner::Evt { reader, offset: 0 },
        };
        Ok(EventReader { inner })
    }
}

fn parse_csv_row(rec: &csv::StringRecord, line: u64) -> Result<EventRecord> {
    let at = || format!("line {line}");
    if rec.len() != 4 {
        return Err(Error::parse(at(), format!("expected 4 fields, got {}", rec.len())));
    }
    let field = |i: usize| rec[i].trim();
    let t_us = field(0)
        .parse::<u64>()
        .map_err(|e| Error::parse(at(), format!("t_us: {e}")))?;
    let x = field(1)
        .parse::<u16>()
        .map_err(|e| Error::parse(at(), format!("x: {e}")))?;
    let y = field(2)
        .parse::<u16>()
        .map_err(|e| Error::parse(at(), format!("y: {e}")))?;
    let p = field(3)
        .parse::<i64>()
        .ok()
        .and_then(Polarity::from_sign)
        .ok_or_else(|| Error::parse(at(), format!("polarity must be -1 or 1, got '{}'", field(3))))?;
    Ok(EventRecord::new(t_us, x, y, p))
}

fn decode_evt(buf: &[u8; EVT_RECORD_BYTES], offset: u64) -> Result<EventRecord> {
    let t_us = u64::from_le_bytes(buf[0..8].try_into().unwrap());
    let x = u16::from_le_bytes([buf[8], buf[9]]);
    let y = u16::from_le_bytes([buf[10], buf[11]]);
    let p = Polarity::from_sign(buf[12] as i8 as i64).ok_or_else(|| {
        Error::parse(
            format!("byte {}", offset + 12),
            format!("polarity byte {} invalid", buf[12] as i8),
        )
    })?;
    if buf[13..] != [0, 0, 0] {
        return Err(Error::parse(format!("byte {}", offset + 13), "nonzero padding"));
    }
    Ok(EventRecord::new(t_us, x, y, p))
}

fn encode_evt(e: &EventRecord) -> [u8; EVT_RECORD_BYTES] {
    let mut buf = [0u8; EVT_RECORD_BYTES];
    buf[0..8].copy_from_slice(&e.t_us.to_le_bytes());
    buf[8..10].copy_from_slice(&e.x.to_le_bytes());
    buf[10..12].copy_from_slice(&e.y.to_le_bytes());
    buf[12] = e.p.sign() as u8;
    buf
}

impl Iterator for EventReader {
    type Item = Result<EventRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        match &mut self.inner {
            Inner::Csv { reader, record } => match reader.read_record(record) {
                Ok(false) => None,
                Ok(true) => {
                    let line = record.position().map_or(0, |p| p.line());
                    Some(parse_csv_row(record, line))
                }
                Err(e) => Some(Err(e.into())),
            },
            Inner::Evt { reader, offset } => {
                let mut buf = [0u8; EVT_RECORD_BYTES];
                let mut filled = 0;
                while filled < EVT_RECORD_BYTES {
                    match reader.read(&mut buf[filled..]) {
                        Ok(0) => break,
                        Ok(n) => filled += n,
                        Err(e) if e.kind() == ErrorKind::Interrupted => {}
                        Err(e) => return Some(Err(e.into())),
                    }
                }
                let start = *offset;
                *offset += filled as u64;
                match filled {
                    0 => None,
                    EVT_RECORD_BYTES => Some(decode_evt(&buf, start)),
                    _ => Some(Err(Error::parse(
                        format!("byte {start}"),
                        format!("truncated record ({filled} of {EVT_RECORD_BYTES} bytes)"),
                    ))),
                }
            }
        }
    }
}

pub fn read_events(path: &Path, format: EventFormat) -> Result<EventReader> {
    EventReader::new(BufReader::new(File::open(path)?), format)
}

/// Write records to `path`, returning how many were written.
pub fn write_events<I>(events: I, path: &Path, format: EventFormat) -> Result<usize>
where
    I: IntoIterator<Item = EventRecord>,
{
    let mut out = BufWriter::new(File::create(path)?);
    let mut n = 0;
    match format {
        EventFormat::Csv => {
            writeln!(out, "{}", CSV_HEADER.join(","))?;
            for e in events {
                writeln!(out, "{},{},{},{}", e.t_us, e.x, e.y, e.p.sign())?;
                n += 1;
            }
        }
        EventFormat::Evt => {
            for e in events {
                out.write_all(&encode_evt(&e))?;
                n += 1;
            }
        }
    }
    out.flush()?;
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn csv_reader(text: &str) -> Result<EventReader> {
        EventReader::new(Cursor::new(text.as_bytes().to_vec()), EventFormat::Csv)
    }

    #[test]
    fn csv_header_only_is_empty() {
        assert_eq!(csv_reader("t_us,x,y,p\n").unwrap().count(), 0);
    }

    #[test]
    fn csv_single_row() {
        let rows: Vec<_> = csv_reader("t_us,x,y,p\n1000,5,7,-1\n")
            .unwrap()
            .collect::<Result<_>>()
            .unwrap();
        assert_eq!(rows, vec![EventRecord::new(1000, 5, 7, Polarity::Negative)]);
    }

    #[test]
    fn csv_errors_carry_line() {
        assert!(csv_reader("t,x,y,p\n").is_err());
        let err = csv_reader("t_us,x,y,p\n1,2,3,1\n4,5,6,0\n")
            .unwrap()
            .nth(1)
            .unwrap()
            .unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn evt_rejects_bad_polarity_and_truncation() {
        let mut rec = encode_evt(&EventRecord::new(1, 2, 3, Polarity::Positive)).to_vec();
        rec.extend_from_slice(&encode_evt(&EventRecord::new(1, 2, 3, Polarity::Positive)));
        rec[16 + 12] = 0;
        let mut r = EventReader::new(Cursor::new(rec), EventFormat::Evt).unwrap();
        assert!(r.next().unwrap().is_ok());
        let err = r.next().unwrap().unwrap_err();
        assert!(err.to_string().contains("byte 28"), "{err}");

        let mut short = encode_evt(&EventRecord::new(9, 0, 0, Polarity::Negative)).to_vec();
        short.extend_from_slice(&[1, 2, 3, 4]);
        let mut r = EventReader::new(Cursor::new(short), EventFormat::Evt).unwrap();
        assert!(r.next().unwrap().is_ok());
        assert!(r.next().unwrap().unwrap_err().to_string().contains("truncated"));
    }

    #[test]
    fn format_from_extension() {
        assert_eq!(EventFormat::from_path(Path::new("a/b.EVT")), Some(EventFormat::Evt));
        assert_eq!(EventFormat::from_path(Path::new("a/b.csv")), Some(EventFormat::Csv));
        assert_eq!(EventFormat::from_path(Path::new("a/b")), None);
    }
}
