use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// `# schema: infosft/<name>/v1`, the first line of every CSV written here.
pub fn schema_line(name: &str) -> String {
    format!("# schema: infosft/{name}/v1")
}

/// Independent stream `stream` of the generator seeded with `seed`.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

pub(crate) fn write_csv<S: AsRef<str>>(
    path: &Path,
    schema: &str,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<S>>,
) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{}", schema_line(schema))?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|s| s.as_ref()))?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text)?;
    Ok(())
}

/// Reads a CSV written by this module, checking its schema line. Returns the
/// header and the records.
pub fn read_schema_csv(path: &Path, schema: &str) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let expected = schema_line(schema);
    if first.trim_end() != expected {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected `{expected}`, found `{}`", first.trim_end()),
        });
    }
    let mut csv = csv::Reader::from_reader(reader);
    let header = csv.headers()?.iter().map(str::to_string).collect();
    let records = csv
        .records()
        .map(|r| r.map(|r| r.iter().map(str::to_string).collect()))
        .collect::<std::result::Result<Vec<Vec<String>>, _>>()?;
    Ok((header, records))
}

pub(crate) fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub(crate) fn slug(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect::<String>()
        .trim_matches('_')
        .to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn csv_round_trip_and_schema_check() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_csv(
            &path,
            "demo",
            &["a", "b"],
            vec![vec!["1", "x,y"], vec!["2", ""]],
        )
        .unwrap();
        let (header, rows) = read_schema_csv(&path, "demo").unwrap();
        assert_eq!(header, ["a", "b"]);
        assert_eq!(rows[0], ["1", "x,y"]);
        assert!(read_schema_csv(&path, "other").is_err());
    }

    #[test]
    fn streams_differ_and_repeat() {
        let a: u64 = rng_for(1, 0).random();
        let b: u64 = rng_for(1, 1).random();
        assert_ne!(a, b);
        assert_eq!(a, rng_for(1, 0).random::<u64>());
    }

    #[test]
    fn slugs() {
        assert_eq!(slug("infosft(0.93)"), "infosft_0.93");
        assert_eq!(slug("sft"), "sft");
    }
}
