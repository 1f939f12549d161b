//! Listing records: parsing, validation and admission filters.

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::quarter::Quarter;

/// Input columns, in order.
pub const COLUMNS: [&str; 13] = [
    "id",
    "source_portal",
    "zip",
    "district_id",
    "canton",
    "property_type",
    "rooms",
    "price_chf",
    "living_space_m2",
    "title",
    "description",
    "year",
    "quarter",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PropertyType {
    House,
    Apartment,
}

impl PropertyType {
    pub fn as_str(self) -> &'static str {
        match self {
            PropertyType::House => "House",
            PropertyType::Apartment => "Apartment",
        }
    }
}

impl fmt::Display for PropertyType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PropertyType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "house" => Ok(PropertyType::House),
            "apartment" => Ok(PropertyType::Apartment),
            other => Err(format!("unknown property type {other:?}")),
        }
    }
}

/// One admitted classified ad.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Listing {
    pub id: String,
    pub source_portal: String,
    pub zip: String,
    pub district_id: String,
    pub canton: String,
    pub property_type: PropertyType,
    pub rooms: f64,
    pub price_chf: u64,
    pub living_space_m2: f64,
    pub title: String,
    pub description: String,
    pub listed_quarter: Quarter,
}

impl Listing {
    /// Asking price per square metre.
    pub fn price_per_m2(&self) -> f64 {
        self.price_chf as f64 / self.living_space_m2
    }
}

/// Fractional-year time of a listing: the midpoint of its quarter.
pub fn listing_time(l: &Listing) -> f64 {
    l.listed_quarter.time()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RejectReason {
    NonPositivePrice,
    NonPositiveSpace,
    MalformedField,
    OutOfWindow,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::NonPositivePrice => "NonPositivePrice",
            RejectReason::NonPositiveSpace => "NonPositiveSpace",
            RejectReason::MalformedField => "MalformedField",
            RejectReason::OutOfWindow => "OutOfWindow",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RejectRecord {
    /// 1-based line number in the source, header included.
    pub raw_line_no: u64,
    pub reason: RejectReason,
    /// Raw field values as read (lossily decoded).
    pub fields: Vec<String>,
}

/// Inclusive observation window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start: Quarter,
    pub end: Quarter,
}

impl Window {
    pub fn contains(&self, q: Quarter) -> bool {
        q >= self.start && q <= self.end
    }
}

impl Default for Window {
    fn default() -> Self {
        Self {
            start: Quarter::new(2005, 1).expect("valid quarter"),
            end: Quarter::new(2012, 4).expect("valid quarter"),
        }
    }
}

#[derive(Debug, Default, Clone, PartialEq)]
pub struct Parsed {
    pub listings: Vec<Listing>,
    pub rejects: Vec<RejectRecord>,
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("reading listings: {0}")]
    Io(#[from] std::io::Error),
    #[error("listing header must be {expected:?}, found {found:?}")]
    Header { expected: Vec<String>, found: Vec<String> },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl IngestError {
    fn from_csv(e: csv::Error) -> Self {
        if e.is_io_error() {
            match e.into_kind() {
                csv::ErrorKind::Io(io) => IngestError::Io(io),
                _ => unreachable!("checked io kind"),
            }
        } else {
            IngestError::Csv(e)
        }
    }
}

/// Parses listing rows, admitting valid rows inside `window`.
///
/// Lines starting with `#` are comments. Every data row ends up exactly once
/// in either `listings` or `rejects`.
pub fn parse_listings<R: Read>(source: R, window: Window) -> Result<Parsed, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(source);
    let header: Vec<String> = reader
        .byte_headers()
        .map_err(IngestError::from_csv)?
        .iter()
        .map(|f| String::from_utf8_lossy(f).trim().to_string())
        .collect();
    if header != COLUMNS {
        return Err(IngestError::Header {
            expected: COLUMNS.iter().map(|c| c.to_string()).collect(),
            found: header,
        });
    }

    let mut out = Parsed::default();
    let mut seen = HashSet::new();
    let mut record = csv::ByteRecord::new();
    loop {
        match reader.read_byte_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) if e.is_io_error() => return Err(IngestError::from_csv(e)),
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                out.rejects.push(RejectRecord { raw_line_no: line, reason: RejectReason::MalformedField, fields: Vec::new() });
                continue;
            }
        }
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        match admit(&record, window, &mut seen) {
            Ok(l) => out.listings.push(l),
            Err(reason) => out.rejects.push(RejectRecord {
                raw_line_no: line,
                reason,
                fields: record.iter().map(|f| String::from_utf8_lossy(f).into_owned()).collect(),
            }),
        }
    }
    Ok(out)
}

fn admit(record: &csv::ByteRecord, window: Window, seen: &mut HashSet<String>) -> Result<Listing, RejectReason> {
    use RejectReason::*;
    if record.len() != COLUMNS.len() {
        return Err(MalformedField);
    }
    let mut f = Vec::with_capacity(COLUMNS.len());
    for raw in record.iter() {
        f.push(std::str::from_utf8(raw).map_err(|_| MalformedField)?);
    }
    let text = |i: usize| f[i].trim().to_string();

    let id = text(0);
    let zip = text(2);
    let district_id = text(3);
    let canton = text(4);
    if id.is_empty() || district_id.is_empty() {
        return Err(MalformedField);
    }
    if zip.len() != 4 || !zip.bytes().all(|b| b.is_ascii_digit()) {
        return Err(MalformedField);
    }
    if canton.len() != 2 || !canton.bytes().all(|b| b.is_ascii_alphabetic()) {
        return Err(MalformedField);
    }
    let property_type: PropertyType = f[5].parse().map_err(|_| MalformedField)?;
    let rooms: f64 = f[6].trim().parse().map_err(|_| MalformedField)?;
    if !rooms.is_finite() || rooms < 1.0 || (rooms * 2.0).fract() != 0.0 {
        return Err(MalformedField);
    }
    let price: i64 = f[7].trim().parse().map_err(|_| MalformedField)?;
    let space: f64 = f[8].trim().parse().map_err(|_| MalformedField)?;
    if !space.is_finite() {
        return Err(MalformedField);
    }
    let year: i32 = f[11].trim().parse().map_err(|_| MalformedField)?;
    let q: u8 = f[12].trim().trim_start_matches(['Q', 'q']).parse().map_err(|_| MalformedField)?;
    let quarter = Quarter::new(year, q).map_err(|_| MalformedField)?;

    if price <= 0 {
        return Err(NonPositivePrice);
    }
    if space <= 0.0 {
        return Err(NonPositiveSpace);
    }
    if !window.contains(quarter) {
        return Err(OutOfWindow);
    }
    if !seen.insert(id.clone()) {
        return Err(MalformedField);
    }
    Ok(Listing {
        id,
        source_portal: text(1),
        zip,
        district_id,
        canton,
        property_type,
        rooms,
        price_chf: price as u64,
        living_space_m2: space,
        title: f[9].to_string(),
        description: f[10].to_string(),
        listed_quarter: quarter,
    })
}

fn listing_fields(l: &Listing) -> [String; 13] {
    [
        l.id.clone(),
        l.source_portal.clone(),
        l.zip.clone(),
        l.district_id.clone(),
        l.canton.clone(),
        l.property_type.to_string(),
        l.rooms.to_string(),
        l.price_chf.to_string(),
        l.living_space_m2.to_string(),
        l.title.clone(),
        l.description.clone(),
        l.listed_quarter.year().to_string(),
        l.listed_quarter.q().to_string(),
    ]
}

/// Writes listings in the input format, preceded by `# ` preamble lines.
pub fn write_listings<W: Write>(w: W, preamble: &[String], listings: &[Listing]) -> std::io::Result<()> {
    let mut w = w;
    for line in preamble {
        writeln!(w, "# {line}")?;
    }
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(COLUMNS)?;
    for l in listings {
        csv.write_record(listing_fields(l))?;
    }
    csv.flush()
}

/// Writes the reject report: input columns plus `line_no` and `reason`.
pub fn write_rejects<W: Write>(w: W, preamble: &[String], rejects: &[RejectRecord]) -> std::io::Result<()> {
    let mut w = w;
    for line in preamble {
        writeln!(w, "# {line}")?;
    }
    let mut csv = csv::Writer::from_writer(w);
    let mut header: Vec<&str> = COLUMNS.to_vec();
    header.extend(["line_no", "reason"]);
    csv.write_record(&header)?;
    for r in rejects {
        let mut row: Vec<String> = (0..COLUMNS.len()).map(|i| r.fields.get(i).cloned().unwrap_or_default()).collect();
        row.push(r.raw_line_no.to_string());
        row.push(r.reason.as_str().to_string());
        csv.write_record(&row)?;
    }
    csv.flush()
}
