//! Particle caches as CSV.
//!
//! One row per proposal with columns `generation, index, theta_1..theta_D,
//! q_value, alpha, u, tilde_d, tilde_t_ns, hi_present, d, t_ns, weight`.
//! Absent simulations leave their fields empty. Floats use the shortest
//! representation that parses back to the same value.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::sample::ParameterVector;
use crate::samplers::{CacheEntry, ParticleCache, SimRecord};

const FIXED_COLUMNS: [&str; 9] = [
    "q_value",
    "alpha",
    "u",
    "tilde_d",
    "tilde_t_ns",
    "hi_present",
    "d",
    "t_ns",
    "weight",
];

pub fn header(dim: usize) -> Vec<String> {
    let mut h = vec!["generation".to_string(), "index".to_string()];
    h.extend((1..=dim).map(|i| format!("theta_{i}")));
    h.extend(FIXED_COLUMNS.iter().map(|s| s.to_string()));
    h
}

fn cache_dim(caches: &[&ParticleCache]) -> Result<usize> {
    let mut dims = caches.iter().flat_map(|c| c.entries.iter().map(|e| e.theta.dim()));
    let dim = dims.next().unwrap_or(0);
    if let Some(other) = dims.find(|&d| d != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: other,
        });
    }
    Ok(dim)
}

/// Write several caches (typically the generations of one run) to one table.
pub fn write_caches<W: Write>(writer: W, caches: &[&ParticleCache]) -> Result<()> {
    let dim = cache_dim(caches)?;
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(header(dim))?;
    let mut row: Vec<String> = Vec::with_capacity(dim + 11);
    for cache in caches {
        for (index, e) in cache.entries.iter().enumerate() {
            row.clear();
            row.push(cache.generation.to_string());
            row.push(index.to_string());
            row.extend(e.theta.as_slice().iter().map(f64::to_string));
            row.push(e.q_value.to_string());
            row.push(e.alpha.to_string());
            row.push(e.u.to_string());
            match e.lo {
                Some(lo) => {
                    row.push(lo.d.to_string());
                    row.push(lo.t_ns.to_string());
                }
                None => row.extend([String::new(), String::new()]),
            }
            match e.hi {
                Some(hi) => {
                    row.push("1".into());
                    row.push(hi.d.to_string());
                    row.push(hi.t_ns.to_string());
                }
                None => row.extend(["0".into(), String::new(), String::new()]),
            }
            row.push(e.weight.to_string());
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_cache<W: Write>(writer: W, cache: &ParticleCache) -> Result<()> {
    write_caches(writer, &[cache])
}

pub fn save_caches(path: &Path, caches: &[&ParticleCache]) -> Result<()> {
    write_caches(std::io::BufWriter::new(std::fs::File::create(path)?), caches)
}

fn field(rec: &csv::StringRecord, i: usize, row: usize) -> Result<&str> {
    rec.get(i).ok_or_else(|| Error::MalformedRecord {
        row,
        reason: format!("missing column {i}"),
    })
}

fn parse<T: std::str::FromStr>(s: &str, name: &str, row: usize) -> Result<T> {
    s.trim().parse().map_err(|_| Error::MalformedRecord {
        row,
        reason: format!("cannot parse {name} from {s:?}"),
    })
}

fn parse_opt<T: std::str::FromStr>(s: &str, name: &str, row: usize) -> Result<Option<T>> {
    if s.trim().is_empty() {
        Ok(None)
    } else {
        parse(s, name, row).map(Some)
    }
}

/// Read caches back, one per generation in order of first appearance.
pub fn read_caches<R: Read>(reader: R) -> Result<Vec<ParticleCache>> {
    let mut r = csv::Reader::from_reader(reader);
    let headers = r.headers()?.clone();
    let n = headers.len();
    if n < 2 + FIXED_COLUMNS.len() {
        return Err(Error::MalformedRecord {
            row: 0,
            reason: format!("expected at least {} columns, found {n}", 2 + FIXED_COLUMNS.len()),
        });
    }
    let dim = n - 2 - FIXED_COLUMNS.len();
    let expected = header(dim);
    if headers.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Error::MalformedRecord {
            row: 0,
            reason: format!("unexpected header {:?}", headers.iter().collect::<Vec<_>>()),
        });
    }

    let mut caches: Vec<ParticleCache> = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let f = |k: usize| field(&rec, k, row);
        let generation: usize = parse(f(0)?, "generation", row)?;
        let theta = (0..dim)
            .map(|d| parse::<f64>(f(2 + d)?, "theta", row))
            .collect::<Result<Vec<_>>>()?;
        let base = 2 + dim;
        let q_value = parse(f(base)?, "q_value", row)?;
        let alpha = parse(f(base + 1)?, "alpha", row)?;
        let u = parse(f(base + 2)?, "u", row)?;
        let tilde_d: Option<f64> = parse_opt(f(base + 3)?, "tilde_d", row)?;
        let tilde_t: Option<u64> = parse_opt(f(base + 4)?, "tilde_t_ns", row)?;
        let lo = match (tilde_d, tilde_t) {
            (Some(d), Some(t_ns)) => Some(SimRecord { d, t_ns }),
            (None, None) => None,
            _ => {
                return Err(Error::MalformedRecord {
                    row,
                    reason: "tilde_d and tilde_t_ns must be both present or both empty".into(),
                })
            }
        };
        let hi = match f(base + 5)?.trim() {
            "1" => Some(SimRecord {
                d: parse(f(base + 6)?, "d", row)?,
                t_ns: parse(f(base + 7)?, "t_ns", row)?,
            }),
            "0" => None,
            other => {
                return Err(Error::MalformedRecord {
                    row,
                    reason: format!("hi_present must be 0 or 1, got {other:?}"),
                })
            }
        };
        let weight = parse(f(base + 8)?, "weight", row)?;
        let entry = CacheEntry {
            theta: ParameterVector::new(theta),
            q_value,
            lo,
            alpha,
            u,
            hi,
            weight,
        };
        match caches.iter_mut().find(|c| c.generation == generation) {
            Some(c) => c.entries.push(entry),
            None => {
                let mut c = ParticleCache::new(generation, f64::NAN);
                c.entries.push(entry);
                caches.push(c);
            }
        }
    }
    Ok(caches)
}

pub fn load_caches(path: &Path) -> Result<Vec<ParticleCache>> {
    read_caches(std::io::BufReader::new(std::fs::File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(theta: Vec<f64>, lo: Option<SimRecord>, hi: Option<SimRecord>, weight: f64) -> CacheEntry {
        CacheEntry {
            theta: theta.into(),
            q_value: 0.1 + 1e-17,
            lo,
            alpha: 0.3,
            u: 0.123456789012345,
            hi,
            weight,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let mut a = ParticleCache::new(1, 1.0);
        a.entries.push(entry(
            vec![1.0 / 3.0, -2.5e-300],
            Some(SimRecord { d: 0.2, t_ns: 7 }),
            Some(SimRecord {
                d: f64::INFINITY,
                t_ns: 12_345,
            }),
            -2.0 / 3.0,
        ));
        a.entries
            .push(entry(vec![0.0, 1.0], Some(SimRecord { d: 3.0, t_ns: 1 }), None, 0.0));
        let mut b = ParticleCache::new(2, 0.5);
        b.entries
            .push(entry(vec![5.0, 6.0], None, Some(SimRecord { d: 0.1, t_ns: 99 }), 12.5));

        let mut buf = Vec::new();
        write_caches(&mut buf, &[&a, &b]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(
            "generation,index,theta_1,theta_2,q_value,alpha,u,tilde_d,tilde_t_ns,hi_present,d,t_ns,weight\n"
        ));
        assert!(text.contains(",inf,"));
        let back = read_caches(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].entries, a.entries);
        assert_eq!(back[1].entries, b.entries);
        assert_eq!(back[1].generation, 2);
    }

    #[test]
    fn malformed_rows_are_rejected() {
        let head = header(1).join(",");
        for bad in [
            format!("{head}\n1,0,x,1,1,0.5,,,0,,,0\n"),
            format!("{head}\n1,0,0.5,1,1,0.5,0.1,,0,,,0\n"),
            format!("{head}\n1,0,0.5,1,1,0.5,0.1,3,2,,,0\n"),
            "a,b\n1,2\n".to_string(),
        ] {
            assert!(read_caches(bad.as_bytes()).is_err(), "{bad}");
        }
    }
}
