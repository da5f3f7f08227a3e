//! Small file helpers.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Write `bytes` to `path` by writing a sibling temporary file and renaming
/// it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// One numeric column of a headed CSV file, by header name.
pub fn read_column(path: &Path, column: &str) -> Result<Vec<f64>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let headers = rdr.headers()?.clone();
    let idx = headers.iter().position(|h| h == column).ok_or_else(|| {
        Error::Validation(format!("{}: no column `{column}` (found `{}`)", path.display(), headers.iter().collect::<Vec<_>>().join(",")))
    })?;
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = rec.get(idx).unwrap_or("").trim();
        let v: f64 = field.parse().map_err(|_| Error::Parse {
            line: k + 2,
            message: format!("`{field}` in column `{column}` is not a number"),
        })?;
        out.push(v);
    }
    Ok(out)
}

/// First entry of the `date` column of a headed CSV file, when it has one.
pub fn read_first_date(path: &Path) -> Result<Option<chrono::NaiveDate>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let Some(idx) = rdr.headers()?.iter().position(|h| h == "date") else {
        return Ok(None);
    };
    match rdr.records().next() {
        Some(rec) => {
            let rec = rec?;
            let field = rec.get(idx).unwrap_or("");
            chrono::NaiveDate::parse_from_str(field, "%Y-%m-%d")
                .map(Some)
                .map_err(|e| Error::Parse { line: 2, message: format!("bad date `{field}`: {e}") })
        }
        None => Ok(None),
    }
}
