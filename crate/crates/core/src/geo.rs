//! Great-circle distances and gridded residence areas.

use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::domain::{ArcTable, Distance, FacilityTier, Matrix};
use crate::error::{Error, Result};

/// Mean Earth radius, km.
pub const DEFAULT_EARTH_RADIUS_KM: f64 = 6371.0088;

/// A point in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    #[serde(default)]
    pub id: String,
    pub lat: f64,
    pub lon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub population: Option<f64>,
    /// Square miles.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub land_area: Option<f64>,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Self {
        Self { id: String::new(), lat, lon, population: None, land_area: None }
    }

    pub fn named(id: impl Into<String>, lat: f64, lon: f64) -> Self {
        Self { id: id.into(), ..Self::new(lat, lon) }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.lat.is_finite() || !self.lon.is_finite() {
            return Err(Error::Geo(format!("{}: non-finite coordinate ({}, {})", self.id, self.lat, self.lon)));
        }
        if !(-90.0..=90.0).contains(&self.lat) {
            return Err(Error::Geo(format!("{}: latitude {} outside [-90, 90]", self.id, self.lat)));
        }
        if !(self.lon > -180.0 && self.lon <= 180.0) {
            return Err(Error::Geo(format!("{}: longitude {} outside (-180, 180]", self.id, self.lon)));
        }
        if let Some(p) = self.population {
            if !(p >= 0.0) {
                return Err(Error::Geo(format!("{}: negative population", self.id)));
            }
        }
        Ok(())
    }
}

/// Great-circle distance in km between two points given in degrees.
pub fn haversine(a: &GeoPoint, b: &GeoPoint, radius_km: f64) -> Result<f64> {
    a.validate()?;
    b.validate()?;
    if !(radius_km > 0.0) || !radius_km.is_finite() {
        return Err(Error::Geo(format!("sphere radius must be positive, got {radius_km}")));
    }
    let (la, lb) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = lb - la;
    let dlon = (b.lon - a.lon).to_radians();
    let s = (dlat / 2.0).sin().powi(2) + la.cos() * lb.cos() * (dlon / 2.0).sin().powi(2);
    // Rounding can push s a hair above 1 for antipodes.
    Ok(2.0 * radius_km * s.sqrt().min(1.0).asin())
}

/// All pairwise distances from `from` to `to`.
pub fn distance_matrix(from: &[GeoPoint], to: &[GeoPoint], radius_km: f64) -> Result<Matrix> {
    from.iter().map(|a| to.iter().map(|b| haversine(a, b, radius_km)).collect()).collect()
}

/// Distance tables and area populations derived from point data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GriddedNetwork {
    pub residence_areas: Vec<String>,
    pub population: Vec<f64>,
    pub res_drop: Matrix,
    pub drop_pri: Matrix,
    pub pri_sec: Matrix,
}

impl GriddedNetwork {
    /// Arc table with uniform unit cost/emission over the given distances.
    pub fn arc_table(distances: &Matrix, unit_cost: f64, unit_emission: f64) -> ArcTable {
        ArcTable {
            distance: distances.iter().map(|r| r.iter().map(|&d| Distance::km(d)).collect()).collect(),
            unit_cost: distances.iter().map(|r| vec![unit_cost; r.len()]).collect(),
            unit_emission: distances.iter().map(|r| vec![unit_emission; r.len()]).collect(),
        }
    }
}

/// Turns every residence point into one area and fills the three
/// tier-adjacent distance matrices.
pub fn grid_to_areas(
    points: &[GeoPoint],
    dropoffs: &[GeoPoint],
    primaries: &[GeoPoint],
    secondaries: &[GeoPoint],
    radius_km: f64,
) -> Result<GriddedNetwork> {
    for (what, list) in
        [("residence points", points), ("drop-off sites", dropoffs), ("primary processors", primaries), ("secondary processors", secondaries)]
    {
        if list.is_empty() {
            return Err(Error::Geo(format!("no {what} given")));
        }
    }
    Ok(GriddedNetwork {
        residence_areas: points
            .iter()
            .enumerate()
            .map(|(k, p)| if p.id.is_empty() { format!("area-{}", k + 1) } else { p.id.clone() })
            .collect(),
        population: points.iter().map(|p| p.population.unwrap_or(0.0)).collect(),
        res_drop: distance_matrix(points, dropoffs, radius_km)?,
        drop_pri: distance_matrix(dropoffs, primaries, radius_km)?,
        pri_sec: distance_matrix(primaries, secondaries, radius_km)?,
    })
}

#[derive(Debug, Deserialize)]
struct PointRecord {
    id: String,
    lat: f64,
    lon: f64,
    #[serde(default)]
    population: Option<f64>,
}

/// Residence grid rows `id,lat,lon,population`.
pub fn read_points_csv<R: Read>(reader: R) -> Result<Vec<GeoPoint>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        let r: PointRecord = rec?;
        let p = GeoPoint { population: r.population, ..GeoPoint::named(r.id, r.lat, r.lon) };
        p.validate()?;
        out.push(p);
    }
    Ok(out)
}

#[derive(Debug, Deserialize)]
struct FacilityRecord {
    id: String,
    lat: f64,
    lon: f64,
    #[serde(default)]
    tier: Option<String>,
}

/// Facility rows `id,lat,lon` with an optional `tier` column
/// (`dropoff|primary|secondary`, default drop-off). Returns the points of
/// each tier in file order.
pub fn read_facilities_csv<R: Read>(reader: R) -> Result<[Vec<GeoPoint>; 3]> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(reader);
    let mut out: [Vec<GeoPoint>; 3] = Default::default();
    for rec in rdr.deserialize() {
        let r: FacilityRecord = rec?;
        let tier = match r.tier.as_deref().filter(|t| !t.is_empty()) {
            None => FacilityTier::Dropoff,
            Some(t) => t.parse::<FacilityTier>()?,
        };
        let p = GeoPoint::named(r.id, r.lat, r.lon);
        p.validate()?;
        out[tier as usize].push(p);
    }
    Ok(out)
}

/// CSV with one row per (from, to) pair.
pub fn distances_csv(from: &[GeoPoint], to: &[GeoPoint], matrix: &Matrix) -> String {
    let mut out = String::from("from,to,distance_km\n");
    for (a, row) in from.iter().zip(matrix) {
        for (b, d) in to.iter().zip(row) {
            out.push_str(&format!("{},{},{}\n", a.id, b.id, d));
        }
    }
    out
}
