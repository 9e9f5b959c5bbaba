//! Flag value parsers.

use chrono::{DateTime, Utc};
use fastfix::frames::GeodeticPoint;
use fastfix::measurements::Modulus;

pub fn epoch(s: &str) -> Result<DateTime<Utc>, String> {
    fastfix::io::parse_epoch(s)
}

/// Seconds from `90`, `90s`, `30m`, `2h` or `8d`.
pub fn duration(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let (num, scale) = match s.char_indices().last() {
        Some((i, 's')) => (&s[..i], 1.0),
        Some((i, 'm')) => (&s[..i], 60.0),
        Some((i, 'h')) => (&s[..i], 3600.0),
        Some((i, 'd')) => (&s[..i], 86_400.0),
        _ => (s, 1.0),
    };
    let v: f64 = num
        .trim()
        .parse()
        .map_err(|_| format!("bad duration {s:?}"))?;
    if !v.is_finite() || v < 0.0 {
        return Err(format!("duration must be a non-negative number, got {s:?}"));
    }
    Ok(v * scale)
}

pub fn lla(s: &str) -> Result<GeodeticPoint, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [lat, lon, alt] = parts.as_slice() else {
        return Err(format!("expected \"lat,lon,alt\", got {s:?}"));
    };
    let num = |v: &str| {
        v.parse::<f64>()
            .map_err(|_| format!("bad number {v:?} in {s:?}"))
    };
    GeodeticPoint::new(num(lat)?, num(lon)?, num(alt)?).map_err(|e| e.to_string())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Altitudes(pub Vec<f64>);

pub fn altitudes(s: &str) -> Result<Altitudes, String> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| format!("bad altitude {v:?}"))
        })
        .collect::<Result<_, _>>()
        .map(Altitudes)
}

pub fn modulus(s: &str) -> Result<Modulus, String> {
    match s.trim() {
        "1ms" | "1" => Ok(Modulus::OneMs),
        "20ms" | "20" => Ok(Modulus::TwentyMs),
        other => Err(format!("modulus must be 1ms or 20ms, got {other:?}")),
    }
}
