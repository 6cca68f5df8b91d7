//! Spectrum CSV files.
//!
//! Header `detuning_mhz,signal,sigma`; the `sigma` column may be omitted or
//! left empty for unweighted data. Detunings are linear frequency in MHz on
//! disk and rad/s in memory. Lines `# key: value` carry metadata.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::spectra::{Spectrum, SpectrumPoint};
use crate::units::{mhz_to_rad_s, rad_s_to_mhz};

pub const SPECTRUM_HEADER: [&str; 3] = ["detuning_mhz", "signal", "sigma"];

pub fn write_spectrum(spectrum: &Spectrum, mut out: impl Write) -> Result<()> {
    for (k, v) in &spectrum.meta {
        writeln!(out, "# {k}: {v}")?;
    }
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(SPECTRUM_HEADER)?;
    for p in spectrum.points() {
        w.write_record([
            rad_s_to_mhz(p.detuning).to_string(),
            p.value.to_string(),
            p.sigma.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_spectrum(spectrum: &Spectrum, path: impl AsRef<Path>) -> Result<()> {
    let f = std::fs::File::create(path)?;
    let mut b = std::io::BufWriter::new(f);
    write_spectrum(spectrum, &mut b)?;
    b.flush()?;
    Ok(())
}

pub fn load_spectrum(path: impl AsRef<Path>) -> Result<Spectrum> {
    read_spectrum(std::fs::File::open(path)?)
}

fn fmt_err(line: usize, message: impl Into<String>) -> Error {
    Error::SpectrumFormat {
        line,
        message: message.into(),
    }
}

pub fn read_spectrum(mut reader: impl Read) -> Result<Spectrum> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    let mut meta = BTreeMap::new();
    for l in text.lines() {
        if let Some(rest) = l.trim_start().strip_prefix('#') {
            if let Some((k, v)) = rest.split_once(':') {
                meta.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
    }
    let header_line = text
        .lines()
        .position(|l| !l.trim_start().starts_with('#'))
        .map_or(1, |k| k + 1);
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let weighted_cols = header == SPECTRUM_HEADER;
    if !(weighted_cols || header == SPECTRUM_HEADER[..2]) {
        return Err(fmt_err(
            header_line,
            format!(
                "expected header `{}`, got `{}`",
                SPECTRUM_HEADER.join(","),
                header.join(",")
            ),
        ));
    }
    let mut points = Vec::new();
    let mut last: Option<f64> = None;
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != header.len() {
            return Err(fmt_err(
                line,
                format!("expected {} fields, got {}", header.len(), rec.len()),
            ));
        }
        let num = |k: usize, name: &str| -> Result<f64> {
            let s = &rec[k];
            let v: f64 = s
                .parse()
                .map_err(|_| fmt_err(line, format!("column `{name}`: cannot parse `{s}`")))?;
            if !v.is_finite() {
                return Err(fmt_err(line, format!("column `{name}` must be finite")));
            }
            Ok(v)
        };
        let d = num(0, "detuning_mhz")?;
        let value = num(1, "signal")?;
        let sigma = if weighted_cols && !rec[2].is_empty() {
            num(2, "sigma")?
        } else {
            0.0
        };
        if sigma < 0.0 {
            return Err(fmt_err(line, "sigma must be >= 0"));
        }
        if last.is_some_and(|l| d <= l) {
            return Err(fmt_err(
                line,
                format!("detuning {d} MHz is not strictly increasing"),
            ));
        }
        last = Some(d);
        points.push(SpectrumPoint {
            detuning: mhz_to_rad_s(d),
            value,
            sigma,
        });
    }
    let mut sp = Spectrum::new(points)?;
    sp.meta = meta;
    Ok(sp)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let sp = Spectrum::from_columns(
            &[mhz_to_rad_s(-100.0), 0.0, mhz_to_rad_s(12.5)],
            &[0.99, 0.97, 1.0],
            &[0.01, 0.01, 0.02],
        )
        .unwrap()
        .with_meta("power_w", 1e-9);
        let mut buf = Vec::new();
        write_spectrum(&sp, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# power_w: 0.000000001\ndetuning_mhz,signal,sigma\n"));
        assert!(!text.contains('\r'));
        let back = read_spectrum(text.as_bytes()).unwrap();
        assert_eq!(back.meta, sp.meta);
        for (a, b) in back.points().iter().zip(sp.points()) {
            assert!((a.detuning - b.detuning).abs() <= 1e-15 * b.detuning.abs());
            assert_eq!((a.value, a.sigma), (b.value, b.sigma));
        }
    }

    #[test]
    fn sigma_column_optional() {
        let sp = read_spectrum("detuning_mhz,signal\n-1,1\n0,0.9\n1,1\n".as_bytes()).unwrap();
        assert!(!sp.is_weighted());
        let sp = read_spectrum("detuning_mhz,signal,sigma\n-1,1,\n0,0.9,\n".as_bytes()).unwrap();
        assert_eq!(sp.points()[1].sigma, 0.0);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e =
            read_spectrum("# c\ndetuning_mhz,signal,sigma\n0,1,0\n0,1,0\n".as_bytes()).unwrap_err();
        assert!(matches!(e, Error::SpectrumFormat { line: 4, .. }), "{e:?}");
        let e = read_spectrum("detuning_mhz,signal,sigma\n0,x,0\n".as_bytes()).unwrap_err();
        assert!(matches!(e, Error::SpectrumFormat { line: 2, .. }));
        let e = read_spectrum("# a: b\nfreq,signal\n".as_bytes()).unwrap_err();
        assert!(matches!(e, Error::SpectrumFormat { line: 2, .. }));
        let e = read_spectrum("detuning_mhz,signal,sigma\n0,1,-1\n".as_bytes()).unwrap_err();
        assert!(matches!(e, Error::SpectrumFormat { line: 2, .. }));
    }
}
