//! Paired-embedding corpus files (text and binary) and sequence files.
//!
//! Text corpus:
//!
//! ```text
//! pairs=2 dim=3
//! 0,H,0,0.1,0.2,0.3
//! 2,G,0,0.1,0.25,0.3
//! ...
//! ```
//!
//! Binary corpus: magic `LPBCORP1`, `u32` pairs, `u32` dim, then `2 * pairs`
//! records of `(u32 id, u8 source, u32 pair_id, dim x f32)`, all little-endian.
//! Source byte is 0 for human, 1 for generated.
//!
//! Sequence file: one `user_id:item,item,...` line per user, chronological.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::{InteractionSequence, Item, ItemId, PairedCorpus, Source};
use crate::error::{Error, Result};

const CORPUS_MAGIC: &[u8; 8] = b"LPBCORP1";

/// Read a corpus file, detecting the binary variant by its magic bytes.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<PairedCorpus> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(CORPUS_MAGIC) {
        read_corpus_binary(&bytes[..])
    } else {
        read_corpus_text(&bytes[..])
    }
}

pub fn read_corpus(bytes: &[u8]) -> Result<PairedCorpus> {
    if bytes.starts_with(CORPUS_MAGIC) {
        read_corpus_binary(bytes)
    } else {
        read_corpus_text(bytes)
    }
}

fn parse_header(line: &str) -> Result<(usize, usize)> {
    let mut pairs = None;
    let mut dim = None;
    for token in line.split_whitespace() {
        let (key, value) = token.split_once('=').ok_or_else(|| Error::Parse {
            row: 1,
            message: format!("malformed header token `{token}`"),
        })?;
        let value: usize = value.parse().map_err(|_| Error::Parse {
            row: 1,
            message: format!("header `{key}` is not a non-negative integer"),
        })?;
        match key {
            "pairs" => pairs = Some(value),
            "dim" => dim = Some(value),
            other => {
                return Err(Error::Parse {
                    row: 1,
                    message: format!("unknown header key `{other}`"),
                })
            }
        }
    }
    match (pairs, dim) {
        (Some(p), Some(d)) if d > 0 => Ok((p, d)),
        _ => Err(Error::Parse {
            row: 1,
            message: "header must be `pairs=<N> dim=<d>` with d >= 1".into(),
        }),
    }
}

pub fn read_corpus_text(reader: impl Read) -> Result<PairedCorpus> {
    let reader = BufReader::new(reader);
    let mut lines = reader.lines();
    let header = lines
        .next()
        .transpose()?
        .ok_or(Error::Empty("corpus file"))?;
    let (pairs, dim) = parse_header(header.trim_start_matches('\u{feff}').trim())?;
    let mut items = Vec::with_capacity(2 * pairs);
    let mut rows = Vec::with_capacity(2 * pairs);
    for (idx, line) in lines.enumerate() {
        let row = idx + 2;
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 3 {
            return Err(Error::Parse {
                row,
                message: "expected `<id>,<H|G>,<pair_id>,<v1>,...`".into(),
            });
        }
        let id: u32 = fields[0].parse().map_err(|_| Error::Parse {
            row,
            message: format!("bad item id `{}`", fields[0]),
        })?;
        let source = match fields[1] {
            "H" => Source::Human,
            "G" => Source::Generated,
            other => {
                return Err(Error::Parse {
                    row,
                    message: format!("source must be H or G, found `{other}`"),
                })
            }
        };
        let pair_id: u32 = fields[2].parse().map_err(|_| Error::Parse {
            row,
            message: format!("bad pair id `{}`", fields[2]),
        })?;
        let values = &fields[3..];
        if values.len() != dim {
            return Err(Error::RowDimension {
                row,
                expected: dim,
                found: values.len(),
            });
        }
        let mut embedding = Vec::with_capacity(dim);
        for (col, v) in values.iter().enumerate() {
            let x: f64 = v.parse().map_err(|_| Error::Parse {
                row,
                message: format!("column {} is not a number: `{v}`", col + 4),
            })?;
            if !x.is_finite() {
                return Err(Error::NonFiniteRow { row, column: col + 4 });
            }
            embedding.push(x);
        }
        items.push(Item {
            id: ItemId(id),
            source,
            pair_id,
            embedding,
        });
        rows.push(row);
    }
    if items.len() != 2 * pairs {
        return Err(Error::Parse {
            row: 1,
            message: format!(
                "header declares {pairs} pairs ({} rows) but file has {} item rows",
                2 * pairs,
                items.len()
            ),
        });
    }
    PairedCorpus::with_rows(items, dim, |pos| rows[pos])
}

fn take<'a>(bytes: &mut &'a [u8], n: usize, record: usize) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(Error::Parse {
            row: record,
            message: "truncated binary corpus".into(),
        });
    }
    let (head, tail) = bytes.split_at(n);
    *bytes = tail;
    Ok(head)
}

fn take_u32(bytes: &mut &[u8], record: usize) -> Result<u32> {
    let b = take(bytes, 4, record)?;
    Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
}

/// Records are numbered from 1 in error messages.
pub fn read_corpus_binary(mut bytes: &[u8]) -> Result<PairedCorpus> {
    let magic = take(&mut bytes, 8, 0)?;
    if magic != CORPUS_MAGIC {
        return Err(Error::Parse {
            row: 0,
            message: "missing LPBCORP1 magic".into(),
        });
    }
    let pairs = take_u32(&mut bytes, 0)? as usize;
    let dim = take_u32(&mut bytes, 0)? as usize;
    if dim == 0 {
        return Err(Error::Parse {
            row: 0,
            message: "dim must be >= 1".into(),
        });
    }
    let mut items = Vec::with_capacity(2 * pairs);
    for record in 1..=2 * pairs {
        let id = take_u32(&mut bytes, record)?;
        let source = match take(&mut bytes, 1, record)?[0] {
            0 => Source::Human,
            1 => Source::Generated,
            other => {
                return Err(Error::Parse {
                    row: record,
                    message: format!("source byte must be 0 or 1, found {other}"),
                })
            }
        };
        let pair_id = take_u32(&mut bytes, record)?;
        let raw = take(&mut bytes, 4 * dim, record)?;
        let mut embedding = Vec::with_capacity(dim);
        for (col, chunk) in raw.chunks_exact(4).enumerate() {
            let x = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
            if !x.is_finite() {
                return Err(Error::NonFiniteRow {
                    row: record,
                    column: col + 4,
                });
            }
            embedding.push(f64::from(x));
        }
        items.push(Item {
            id: ItemId(id),
            source,
            pair_id,
            embedding,
        });
    }
    if !bytes.is_empty() {
        return Err(Error::Parse {
            row: 2 * pairs + 1,
            message: format!("{} trailing bytes after last record", bytes.len()),
        });
    }
    PairedCorpus::with_rows(items, dim, |pos| pos + 1)
}

pub fn write_corpus_text(corpus: &PairedCorpus, mut out: impl Write) -> Result<()> {
    writeln!(out, "pairs={} dim={}", corpus.n_pairs(), corpus.dim())?;
    for item in corpus.items() {
        write!(out, "{},{},{}", item.id, item.source.tag(), item.pair_id)?;
        for v in &item.embedding {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Embeddings are narrowed to `f32`.
pub fn write_corpus_binary(corpus: &PairedCorpus, mut out: impl Write) -> Result<()> {
    out.write_all(CORPUS_MAGIC)?;
    out.write_all(&(corpus.n_pairs() as u32).to_le_bytes())?;
    out.write_all(&(corpus.dim() as u32).to_le_bytes())?;
    for item in corpus.items() {
        out.write_all(&item.id.0.to_le_bytes())?;
        out.write_all(&[match item.source {
            Source::Human => 0u8,
            Source::Generated => 1u8,
        }])?;
        out.write_all(&item.pair_id.to_le_bytes())?;
        for &v in &item.embedding {
            out.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_sequences(reader: impl Read) -> Result<Vec<InteractionSequence>> {
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let row = idx + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (user, items) = line.split_once(':').ok_or_else(|| Error::Parse {
            row,
            message: "expected `<user_id>:<item_id,...>`".into(),
        })?;
        let user_id: u32 = user.trim().parse().map_err(|_| Error::Parse {
            row,
            message: format!("bad user id `{user}`"),
        })?;
        let items = items
            .split(',')
            .map(|s| {
                s.trim().parse::<u32>().map(ItemId).map_err(|_| Error::Parse {
                    row,
                    message: format!("bad item id `{s}`"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(InteractionSequence::new(user_id, items));
    }
    Ok(out)
}

pub fn write_sequences(sequences: &[InteractionSequence], mut out: impl Write) -> Result<()> {
    for seq in sequences {
        write!(out, "{}:", seq.user_id)?;
        for (k, id) in seq.items.iter().enumerate() {
            if k > 0 {
                write!(out, ",")?;
            }
            write!(out, "{id}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic_corpus, RewriterOracle};

    const TWO_PAIRS: &str = "pairs=2 dim=4\n\
        0,H,0,1,0,0,0\n\
        1,H,1,0,1,0,0\n\
        2,G,0,0.9,0.1,0,0\n\
        3,G,1,0.1,0.9,0,0\n";

    #[test]
    fn parses_well_formed_text() {
        let corpus = read_corpus_text(TWO_PAIRS.as_bytes()).unwrap();
        assert_eq!(corpus.len(), 4);
        assert_eq!(corpus.pair_index().len(), 2);
        assert_eq!(corpus.counterpart(ItemId(1)).unwrap(), ItemId(3));
    }

    #[test]
    fn short_row_reports_dimension_mismatch() {
        let text = TWO_PAIRS.replace("3,G,1,0.1,0.9,0,0", "3,G,1,0.1,0.9,0");
        let err = read_corpus_text(text.as_bytes()).unwrap_err();
        assert!(
            matches!(err, Error::RowDimension { row: 5, expected: 4, found: 3 }),
            "{err}"
        );
        assert!(err.to_string().starts_with("row 5"));
    }

    #[test]
    fn dangling_pair_is_reported() {
        let text = "pairs=2 dim=2\n0,H,0,1,0\n1,G,0,1,0\n2,H,1,0,1\n3,G,7,0,1\n";
        let err = read_corpus_text(text.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::DanglingPair { row: 4, pair_id: 1, .. }), "{err}");
    }

    #[test]
    fn duplicate_id_is_reported() {
        let text = "pairs=1 dim=1\n0,H,0,1\n0,G,0,1\n";
        let err = read_corpus_text(text.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::DuplicateId { row: 3, id: 0 }), "{err}");
    }

    #[test]
    fn non_finite_value_is_reported() {
        let text = "pairs=1 dim=2\n0,H,0,1,NaN\n1,G,0,1,0\n";
        let err = read_corpus_text(text.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::NonFiniteRow { row: 2, column: 5 }), "{err}");
    }

    #[test]
    fn text_round_trip_is_exact() {
        let oracle = RewriterOracle::random_shift(5, 0.4, 0.1, true, 1);
        let corpus = generate_synthetic_corpus(6, 5, &oracle, 2).unwrap();
        let mut buf = Vec::new();
        write_corpus_text(&corpus, &mut buf).unwrap();
        assert_eq!(read_corpus(&buf).unwrap(), corpus);
    }

    #[test]
    fn binary_round_trip_matches_f32_values() {
        let oracle = RewriterOracle::random_shift(5, 0.4, 0.1, true, 1);
        let corpus = generate_synthetic_corpus(6, 5, &oracle, 2).unwrap();
        let mut buf = Vec::new();
        write_corpus_binary(&corpus, &mut buf).unwrap();
        assert_eq!(buf.len(), 16 + 12 * (9 + 20));
        let back = read_corpus(&buf).unwrap();
        for (a, b) in corpus.items().iter().zip(back.items()) {
            assert_eq!((a.id, a.source, a.pair_id), (b.id, b.source, b.pair_id));
            for (x, y) in a.embedding.iter().zip(&b.embedding) {
                assert_eq!(*x as f32, *y as f32);
            }
        }
    }

    #[test]
    fn truncated_binary_is_rejected() {
        let corpus = generate_synthetic_corpus(2, 3, &RewriterOracle::identity(3), 2).unwrap();
        let mut buf = Vec::new();
        write_corpus_binary(&corpus, &mut buf).unwrap();
        buf.truncate(buf.len() - 2);
        assert!(matches!(read_corpus(&buf), Err(Error::Parse { row: 4, .. })));
    }

    #[test]
    fn sequence_file_round_trip() {
        let text = "1:0,3,2\n7:5,4\n";
        let seqs = read_sequences(text.as_bytes()).unwrap();
        assert_eq!(seqs.len(), 2);
        assert_eq!(seqs[1].user_id, 7);
        assert_eq!(seqs[1].items, vec![ItemId(5), ItemId(4)]);
        let mut out = Vec::new();
        write_sequences(&seqs, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), text);
    }

    #[test]
    fn sequence_file_reports_bad_line() {
        let err = read_sequences("1:0,2\n2;4\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 2, .. }));
    }
}
