//! CSV, JSON and gnuplot writers. All output is produced after the
//! parallel work has finished, so file contents depend only on the results.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use gsdde_core::integrator::PathEnsemble;
use gsdde_core::sublinear::EstimateSeries;

use crate::error::CliError;

/// Which estimate columns a series file carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesColumns {
    UpperAndLower,
    LowerOnly,
}

impl SeriesColumns {
    pub fn header(self) -> &'static str {
        match self {
            SeriesColumns::UpperAndLower => "t,upper,lower,excluded_count",
            SeriesColumns::LowerOnly => "t,lower,excluded_count",
        }
    }
}

/// Writes `# `-prefixed comment lines, a header row and one row per time.
pub fn write_series_csv<W: Write>(
    mut out: W,
    series: &EstimateSeries,
    columns: SeriesColumns,
    comments: &[String],
) -> io::Result<()> {
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    writeln!(out, "{}", columns.header())?;
    for i in 0..series.len() {
        let (t, up, lo, ex) = (
            series.times[i],
            series.upper[i],
            series.lower[i],
            series.excluded[i],
        );
        match columns {
            SeriesColumns::UpperAndLower => writeln!(out, "{t},{up},{lo},{ex}")?,
            SeriesColumns::LowerOnly => writeln!(out, "{t},{lo},{ex}")?,
        }
    }
    Ok(())
}

/// One row per stored path value on `t ≥ 0`: `t,k,j,x`.
pub fn write_paths_csv<W: Write>(mut out: W, ensemble: &PathEnsemble) -> io::Result<()> {
    writeln!(out, "t,k,j,x")?;
    let grid = ensemble.time();
    for path in ensemble.paths() {
        for i in 0..=grid.steps() {
            match path.at(i as isize) {
                Some(x) => writeln!(out, "{},{},{},{x}", grid.time(i), path.level, path.sample)?,
                None => break,
            }
        }
    }
    Ok(())
}

/// A gnuplot script plotting the estimate columns of `csv_name`.
pub fn gnuplot_script(csv_name: &str, columns: SeriesColumns, title: &str) -> String {
    let plots = match columns {
        SeriesColumns::UpperAndLower => format!(
            "plot '{csv_name}' using 1:2 with lines title 'upper', \\\n     '' using 1:3 with lines title 'lower'"
        ),
        SeriesColumns::LowerOnly => {
            format!("plot '{csv_name}' using 1:2 with lines title 'lower'")
        }
    };
    format!(
        "set datafile separator ','\nset datafile commentschars '#'\nset key autotitle columnhead\n\
         set title '{title}'\nset xlabel 't'\n{plots}\n"
    )
}

pub fn write_file(path: &Path, contents: &[u8]) -> Result<PathBuf, CliError> {
    let wrap = |source| CliError::Write {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(wrap)?;
    }
    fs::write(path, contents).map_err(wrap)?;
    Ok(path.to_path_buf())
}
