//! Network instance data model for a four-tier take-back network:
//! residence areas → drop-off sites → primary processors → secondary processors.
//!
//! Matrices are stored row-major as nested vectors and indexed from zero:
//! `supply.mass[i][h]`, tier tables `[item][facility]`, `composition[j][i]`,
//! `efficiency[j][p]`, arc tables `[from][to]`.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub type Matrix = Vec<Vec<f64>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FacilityTier {
    Dropoff,
    Primary,
    Secondary,
}

impl FacilityTier {
    pub const ALL: [FacilityTier; 3] = [FacilityTier::Dropoff, FacilityTier::Primary, FacilityTier::Secondary];

    pub fn label(self) -> &'static str {
        match self {
            FacilityTier::Dropoff => "dropoff",
            FacilityTier::Primary => "primary",
            FacilityTier::Secondary => "secondary",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ArcClass {
    #[serde(rename = "res-drop")]
    ResDrop,
    #[serde(rename = "drop-pri")]
    DropPri,
    #[serde(rename = "pri-sec")]
    PriSec,
}

impl ArcClass {
    pub const ALL: [ArcClass; 3] = [ArcClass::ResDrop, ArcClass::DropPri, ArcClass::PriSec];

    pub fn label(self) -> &'static str {
        match self {
            ArcClass::ResDrop => "res-drop",
            ArcClass::DropPri => "drop-pri",
            ArcClass::PriSec => "pri-sec",
        }
    }
}

impl std::str::FromStr for ArcClass {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "res-drop" => Ok(ArcClass::ResDrop),
            "drop-pri" => Ok(ArcClass::DropPri),
            "pri-sec" => Ok(ArcClass::PriSec),
            other => Err(Error::InvalidInstance(format!("unknown arc class `{other}`"))),
        }
    }
}

impl std::str::FromStr for FacilityTier {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "dropoff" | "drop" => Ok(FacilityTier::Dropoff),
            "primary" | "pri" => Ok(FacilityTier::Primary),
            "secondary" | "sec" => Ok(FacilityTier::Secondary),
            other => Err(Error::InvalidInstance(format!("unknown facility tier `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropoffLocation {
    pub dropoff: String,
    pub city: String,
    pub county: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sets {
    pub products: Vec<String>,
    pub materials: Vec<String>,
    pub residence_areas: Vec<String>,
    pub dropoffs: Vec<String>,
    pub primaries: Vec<String>,
    pub secondaries: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dropoff_locations: Option<Vec<DropoffLocation>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Supply {
    /// Product mass per residence area, kg: `mass[i][h]`.
    pub mass: Matrix,
    /// Persons per residence area.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub population: Option<Vec<f64>>,
    /// Persons per household.
    #[serde(default = "one")]
    pub household_size: f64,
    /// Participation rate in [0, 1].
    #[serde(default = "one")]
    pub participation: f64,
    /// Trips per participating household per year.
    pub trips_per_year: f64,
    /// Dedicated-trip fraction per drop-off site.
    pub dedicated_fraction: Vec<f64>,
    /// Per-area factor replacing `population/household_size · participation`.
    /// Used when `population` is absent; defaults to 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lumped_multiplier: Option<Vec<f64>>,
}

fn one() -> f64 {
    1.0
}

/// Processing data for one facility tier. Items are products for drop-off and
/// primary tiers and materials for the secondary tier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierProcessing {
    /// Unit processing cost, $/kg: `[item][facility]`.
    pub cost: Matrix,
    /// Unit processing credit (resale price), $/kg.
    pub credit: Matrix,
    /// Unit processing emission, kgCO2/kg.
    pub emission: Matrix,
    /// Unit emission offset, kgCO2/kg.
    pub offset: Matrix,
    /// Resale fraction per item.
    pub resale: Vec<f64>,
    /// Per-item capacity, kg. Absent means uncapacitated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity: Option<Matrix>,
    /// Aggregate capacity over all items per facility, kg.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_capacity: Option<Vec<f64>>,
    /// Per-item minimum shipment, kg. Absent means zero.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_shipment: Option<Matrix>,
    /// Fixed opening cost per facility, $.
    pub fixed_cost: Vec<f64>,
    /// Minimum number of facilities of this tier to open.
    #[serde(default)]
    pub min_open: usize,
}

impl TierProcessing {
    pub fn capacity(&self, item: usize, facility: usize) -> f64 {
        self.capacity.as_ref().map_or(f64::INFINITY, |c| c[item][facility])
    }

    pub fn min_shipment(&self, item: usize, facility: usize) -> f64 {
        self.min_shipment.as_ref().map_or(0.0, |c| c[item][facility])
    }

    pub fn total_capacity(&self, facility: usize) -> Option<f64> {
        self.total_capacity.as_ref().map(|c| c[facility])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Processing {
    pub dropoff: TierProcessing,
    pub primary: TierProcessing,
    pub secondary: TierProcessing,
    /// Mass fraction of material j in product i: `composition[j][i]`.
    pub composition: Matrix,
    /// Separation efficiency of material j at primary p: `efficiency[j][p]`.
    /// Absent means 1 everywhere.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub efficiency: Option<Matrix>,
}

impl Processing {
    pub fn tier(&self, tier: FacilityTier) -> &TierProcessing {
        match tier {
            FacilityTier::Dropoff => &self.dropoff,
            FacilityTier::Primary => &self.primary,
            FacilityTier::Secondary => &self.secondary,
        }
    }

    pub fn tier_mut(&mut self, tier: FacilityTier) -> &mut TierProcessing {
        match tier {
            FacilityTier::Dropoff => &mut self.dropoff,
            FacilityTier::Primary => &mut self.primary,
            FacilityTier::Secondary => &mut self.secondary,
        }
    }

    pub fn efficiency(&self, material: usize, primary: usize) -> f64 {
        self.efficiency.as_ref().map_or(1.0, |e| e[material][primary])
    }
}

/// Arc length in km, or an explicit marker that no route exists.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Distance(pub Option<f64>);

impl Distance {
    pub const FORBIDDEN: Distance = Distance(None);

    pub fn km(value: f64) -> Self {
        Distance(Some(value))
    }

    pub fn is_forbidden(self) -> bool {
        self.0.is_none()
    }
}

const FORBIDDEN_MARKER: &str = "forbidden";

impl Serialize for Distance {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self.0 {
            Some(v) => s.serialize_f64(v),
            None => s.serialize_str(FORBIDDEN_MARKER),
        }
    }
}

impl<'de> Deserialize<'de> for Distance {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Km(f64),
            Marker(String),
        }
        match Raw::deserialize(d)? {
            Raw::Km(v) => Ok(Distance(Some(v))),
            Raw::Marker(m) if m == FORBIDDEN_MARKER || m == "-" => Ok(Distance(None)),
            Raw::Marker(m) => Err(serde::de::Error::custom(format!("expected a distance or \"forbidden\", got `{m}`"))),
        }
    }
}

impl fmt::Display for Distance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(v) => write!(f, "{v}"),
            None => f.write_str(FORBIDDEN_MARKER),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArcTable {
    pub distance: Vec<Vec<Distance>>,
    /// $/km for res→drop (per trip), $/kg-km otherwise.
    pub unit_cost: Matrix,
    /// kgCO2/km for res→drop (per trip), kgCO2/kg-km otherwise.
    pub unit_emission: Matrix,
}

impl ArcTable {
    pub fn filled(rows: usize, cols: usize, distance: f64, unit_cost: f64, unit_emission: f64) -> Self {
        Self {
            distance: vec![vec![Distance::km(distance); cols]; rows],
            unit_cost: vec![vec![unit_cost; cols]; rows],
            unit_emission: vec![vec![unit_emission; cols]; rows],
        }
    }

    pub fn km(&self, from: usize, to: usize) -> Option<f64> {
        self.distance[from][to].0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arcs {
    pub res_drop: ArcTable,
    pub drop_pri: ArcTable,
    pub pri_sec: ArcTable,
}

impl Arcs {
    pub fn table(&self, class: ArcClass) -> &ArcTable {
        match class {
            ArcClass::ResDrop => &self.res_drop,
            ArcClass::DropPri => &self.drop_pri,
            ArcClass::PriSec => &self.pri_sec,
        }
    }

    pub fn table_mut(&mut self, class: ArcClass) -> &mut ArcTable {
        match class {
            ArcClass::ResDrop => &mut self.res_drop,
            ArcClass::DropPri => &mut self.drop_pri,
            ArcClass::PriSec => &mut self.pri_sec,
        }
    }
}

/// An arbitrary linear row over named model variables, e.g. `X_1 + X_2 >= 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtraRow {
    pub name: String,
    pub terms: Vec<(String, f64)>,
    pub relation: crate::milp::Relation,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct City {
    pub name: String,
    pub county: String,
    pub population: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    /// Emit the county/city siting rows for drop-off sites.
    #[serde(default)]
    pub siting_rules: bool,
    /// Counties that must host a site, in addition to those named by
    /// `sets.dropoff_locations`.
    #[serde(default)]
    pub counties: Vec<String>,
    #[serde(default)]
    pub cities: Vec<City>,
    /// Cities with population strictly above this must host a site.
    #[serde(default = "default_city_threshold")]
    pub city_threshold: f64,
    #[serde(default)]
    pub extra_rows: Vec<ExtraRow>,
}

fn default_city_threshold() -> f64 {
    10_000.0
}

impl Default for Policy {
    fn default() -> Self {
        Self {
            siting_rules: false,
            counties: Vec::new(),
            cities: Vec::new(),
            city_threshold: default_city_threshold(),
            extra_rows: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMeta {
    #[serde(default)]
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub notes: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkInstance {
    #[serde(default)]
    pub name: String,
    pub sets: Sets,
    pub supply: Supply,
    pub processing: Processing,
    pub arcs: Arcs,
    #[serde(default)]
    pub policy: Policy,
    #[serde(default)]
    pub scenario: ScenarioMeta,
}

impl NetworkInstance {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn num_products(&self) -> usize {
        self.sets.products.len()
    }
    pub fn num_materials(&self) -> usize {
        self.sets.materials.len()
    }
    pub fn num_areas(&self) -> usize {
        self.sets.residence_areas.len()
    }
    pub fn num_dropoffs(&self) -> usize {
        self.sets.dropoffs.len()
    }
    pub fn num_primaries(&self) -> usize {
        self.sets.primaries.len()
    }
    pub fn num_secondaries(&self) -> usize {
        self.sets.secondaries.len()
    }

    pub fn facilities(&self, tier: FacilityTier) -> &[String] {
        match tier {
            FacilityTier::Dropoff => &self.sets.dropoffs,
            FacilityTier::Primary => &self.sets.primaries,
            FacilityTier::Secondary => &self.sets.secondaries,
        }
    }

    /// Item identifiers handled at a tier (products, or materials at secondaries).
    pub fn items(&self, tier: FacilityTier) -> &[String] {
        match tier {
            FacilityTier::Secondary => &self.sets.materials,
            _ => &self.sets.products,
        }
    }

    /// Households-times-participation factor for area `h`.
    fn household_factor(&self, h: usize) -> Result<f64> {
        let s = &self.supply;
        match &s.population {
            Some(pp) => {
                if s.household_size == 0.0 {
                    return Err(Error::Config("household_size is zero".into()));
                }
                Ok(pp[h] / s.household_size * s.participation)
            }
            None => Ok(s.lumped_multiplier.as_ref().map_or(1.0, |l| l[h])),
        }
    }

    /// Annual dedicated trips from area `h` to drop-off `c`; multiplies every
    /// per-km residence→drop-off transport term.
    pub fn trip_multiplier(&self, h: usize, c: usize) -> Result<f64> {
        Ok(self.household_factor(h)? * self.supply.trips_per_year * self.supply.dedicated_fraction[c])
    }

    /// Total supplied mass of product `i` over all areas.
    pub fn product_supply(&self, i: usize) -> f64 {
        self.supply.mass[i].iter().sum()
    }

    pub fn total_supply(&self) -> f64 {
        (0..self.num_products()).map(|i| self.product_supply(i)).sum()
    }

    pub fn dropoff_index(&self, id: &str) -> Option<usize> {
        self.sets.dropoffs.iter().position(|d| d == id)
    }

    pub fn validate(&self) -> ValidationReport {
        validate(self)
    }

    /// Overwrites arc data from CSV rows `arc,from,to,distance,unit_cost,unit_emission`
    /// where `arc` is `res-drop`, `drop-pri` or `pri-sec` and `from`/`to` are
    /// identifiers. A distance of `-` or `forbidden` marks a missing route.
    /// Returns the number of rows applied.
    pub fn import_arcs_csv<R: Read>(&mut self, reader: R) -> Result<usize> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(reader);
        let mut count = 0;
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() < 6 {
                return Err(Error::InvalidInstance(format!("arc row {count} has {} columns, expected 6", rec.len())));
            }
            let class: ArcClass = rec[0].parse()?;
            let (from_set, to_set) = match class {
                ArcClass::ResDrop => (&self.sets.residence_areas, &self.sets.dropoffs),
                ArcClass::DropPri => (&self.sets.dropoffs, &self.sets.primaries),
                ArcClass::PriSec => (&self.sets.primaries, &self.sets.secondaries),
            };
            let from = lookup(from_set, &rec[1])?;
            let to = lookup(to_set, &rec[2])?;
            let distance = match &rec[3] {
                "-" | FORBIDDEN_MARKER => Distance::FORBIDDEN,
                v => Distance::km(parse_num(v)?),
            };
            let cost = parse_num(&rec[4])?;
            let emission = parse_num(&rec[5])?;
            let table = self.arcs.table_mut(class);
            table.distance[from][to] = distance;
            table.unit_cost[from][to] = cost;
            table.unit_emission[from][to] = emission;
            count += 1;
        }
        Ok(count)
    }

    /// Overwrites processing data from CSV rows
    /// `tier,item,facility,cost,credit,emission,offset`.
    pub fn import_processing_csv<R: Read>(&mut self, reader: R) -> Result<usize> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(reader);
        let mut count = 0;
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() < 7 {
                return Err(Error::InvalidInstance(format!("processing row {count} has {} columns, expected 7", rec.len())));
            }
            let tier: FacilityTier = rec[0].parse()?;
            let item = lookup(self.items(tier), &rec[1])?;
            let facility = lookup(self.facilities(tier), &rec[2])?;
            let values = [parse_num(&rec[3])?, parse_num(&rec[4])?, parse_num(&rec[5])?, parse_num(&rec[6])?];
            let t = self.processing.tier_mut(tier);
            t.cost[item][facility] = values[0];
            t.credit[item][facility] = values[1];
            t.emission[item][facility] = values[2];
            t.offset[item][facility] = values[3];
            count += 1;
        }
        Ok(count)
    }
}

fn lookup(set: &[String], id: &str) -> Result<usize> {
    set.iter().position(|s| s == id).ok_or_else(|| Error::InvalidInstance(format!("unknown identifier `{id}`")))
}

fn parse_num(s: &str) -> Result<f64> {
    s.parse::<f64>().map_err(|_| Error::InvalidInstance(format!("not a number: `{s}`")))
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Issue {
    /// Offending symbol, e.g. `processing.dropoff.resale`.
    pub symbol: String,
    /// Zero-based index tuple into the symbol.
    pub index: Vec<usize>,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{:?}: {}", self.symbol, self.index, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }

    fn push(&mut self, symbol: &str, index: Vec<usize>, message: impl Into<String>) {
        self.issues.push(Issue { symbol: symbol.to_string(), index, message: message.into() });
    }

    /// Converts a non-empty report into an error.
    pub fn into_result(self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            let text: Vec<String> = self.issues.iter().map(|i| i.to_string()).collect();
            Err(Error::InvalidInstance(text.join("; ")))
        }
    }
}

struct Checker<'a> {
    report: &'a mut ValidationReport,
}

impl Checker<'_> {
    fn list(&mut self, symbol: &str, items: &[String]) {
        if items.is_empty() {
            self.report.push(symbol, vec![], "must not be empty");
        }
        let mut seen = BTreeSet::new();
        for (k, it) in items.iter().enumerate() {
            if !seen.insert(it) {
                self.report.push(symbol, vec![k], format!("duplicate identifier `{it}`"));
            }
        }
    }

    fn dims_vec(&mut self, symbol: &str, v: &[f64], len: usize) -> bool {
        if v.len() != len {
            self.report.push(symbol, vec![], format!("expected {len} entries, found {}", v.len()));
            return false;
        }
        true
    }

    fn dims(&mut self, symbol: &str, m: &[Vec<f64>], rows: usize, cols: usize) -> bool {
        if m.len() != rows || m.iter().any(|r| r.len() != cols) {
            self.report.push(symbol, vec![], format!("expected a {rows}x{cols} matrix"));
            return false;
        }
        true
    }

    fn scalar(&mut self, symbol: &str, index: Vec<usize>, v: f64, lo: f64, hi: f64, lo_open: bool) {
        let below = if lo_open { v <= lo } else { v < lo };
        if !v.is_finite() && !(v == f64::INFINITY && hi == f64::INFINITY) || below || v > hi {
            let range = format!("{}{lo}, {hi}]", if lo_open { "(" } else { "[" });
            self.report.push(symbol, index, format!("value {v} outside {range}"));
        }
    }

    fn vector(&mut self, symbol: &str, v: &[f64], len: usize, lo: f64, hi: f64) {
        if self.dims_vec(symbol, v, len) {
            for (k, &x) in v.iter().enumerate() {
                self.scalar(symbol, vec![k], x, lo, hi, false);
            }
        }
    }

    fn matrix(&mut self, symbol: &str, m: &[Vec<f64>], rows: usize, cols: usize, lo: f64, hi: f64) -> bool {
        if !self.dims(symbol, m, rows, cols) {
            return false;
        }
        for (a, row) in m.iter().enumerate() {
            for (b, &x) in row.iter().enumerate() {
                self.scalar(symbol, vec![a, b], x, lo, hi, false);
            }
        }
        true
    }
}

fn validate(inst: &NetworkInstance) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut ck = Checker { report: &mut report };
    let s = &inst.sets;
    ck.list("sets.products", &s.products);
    ck.list("sets.materials", &s.materials);
    ck.list("sets.residence_areas", &s.residence_areas);
    ck.list("sets.dropoffs", &s.dropoffs);
    ck.list("sets.primaries", &s.primaries);
    ck.list("sets.secondaries", &s.secondaries);
    if let Some(locs) = &s.dropoff_locations {
        for (k, loc) in locs.iter().enumerate() {
            if !s.dropoffs.contains(&loc.dropoff) {
                ck.report.push("sets.dropoff_locations", vec![k], format!("unknown drop-off `{}`", loc.dropoff));
            }
        }
    }

    let (ni, nm, nh, nc, np, ns) =
        (s.products.len(), s.materials.len(), s.residence_areas.len(), s.dropoffs.len(), s.primaries.len(), s.secondaries.len());
    let inf = f64::INFINITY;

    let sup = &inst.supply;
    ck.matrix("supply.mass", &sup.mass, ni, nh, 0.0, inf);
    if let Some(pp) = &sup.population {
        ck.vector("supply.population", pp, nh, 0.0, inf);
        ck.scalar("supply.household_size", vec![], sup.household_size, 0.0, inf, true);
    }
    ck.scalar("supply.participation", vec![], sup.participation, 0.0, 1.0, false);
    ck.scalar("supply.trips_per_year", vec![], sup.trips_per_year, 0.0, inf, false);
    if ck.dims_vec("supply.dedicated_fraction", &sup.dedicated_fraction, nc) {
        for (c, &x) in sup.dedicated_fraction.iter().enumerate() {
            ck.scalar("supply.dedicated_fraction", vec![c], x, 0.0, 1.0, true);
        }
    }
    if let Some(l) = &sup.lumped_multiplier {
        ck.vector("supply.lumped_multiplier", l, nh, 0.0, inf);
    }

    for tier in FacilityTier::ALL {
        let t = inst.processing.tier(tier);
        let items = if tier == FacilityTier::Secondary { nm } else { ni };
        let nf = match tier {
            FacilityTier::Dropoff => nc,
            FacilityTier::Primary => np,
            FacilityTier::Secondary => ns,
        };
        let p = format!("processing.{}", tier.label());
        ck.matrix(&format!("{p}.cost"), &t.cost, items, nf, 0.0, inf);
        ck.matrix(&format!("{p}.credit"), &t.credit, items, nf, 0.0, inf);
        ck.matrix(&format!("{p}.emission"), &t.emission, items, nf, 0.0, inf);
        ck.matrix(&format!("{p}.offset"), &t.offset, items, nf, 0.0, inf);
        ck.vector(&format!("{p}.resale"), &t.resale, items, 0.0, 1.0);
        ck.vector(&format!("{p}.fixed_cost"), &t.fixed_cost, nf, 0.0, inf);
        if let Some(tc) = &t.total_capacity {
            ck.vector(&format!("{p}.total_capacity"), tc, nf, 0.0, inf);
        }
        let cap_ok = match &t.capacity {
            Some(c) => ck.matrix(&format!("{p}.capacity"), c, items, nf, 0.0, inf),
            None => true,
        };
        if let Some(lim) = &t.min_shipment {
            if ck.matrix(&format!("{p}.min_shipment"), lim, items, nf, 0.0, inf) && cap_ok {
                for (a, row) in lim.iter().enumerate() {
                    for (b, &x) in row.iter().enumerate() {
                        if x >= 0.0 && x > t.capacity(a, b) {
                            ck.report.push(&format!("{p}.min_shipment"), vec![a, b], "exceeds capacity");
                        }
                    }
                }
            }
        }
        if t.min_open > nf {
            ck.report.push(&format!("{p}.min_open"), vec![], format!("{} exceeds the {nf} candidate facilities", t.min_open));
        }
    }

    let q = &inst.processing.composition;
    if ck.matrix("processing.composition", q, nm, ni, 0.0, 1.0) {
        for i in 0..ni {
            let total: f64 = q.iter().map(|row| row[i]).sum();
            if total > 1.0 + 1e-12 {
                ck.report.push("processing.composition", vec![i], format!("material fractions of product {i} sum to {total} > 1"));
            }
        }
    }
    if let Some(eff) = &inst.processing.efficiency {
        ck.matrix("processing.efficiency", eff, nm, np, 0.0, 1.0);
    }

    for (class, rows, cols) in [(ArcClass::ResDrop, nh, nc), (ArcClass::DropPri, nc, np), (ArcClass::PriSec, np, ns)] {
        let t = inst.arcs.table(class);
        let p = format!("arcs.{}", class.label());
        let dist_ok = t.distance.len() == rows && t.distance.iter().all(|r| r.len() == cols);
        if !dist_ok {
            ck.report.push(&format!("{p}.distance"), vec![], format!("expected a {rows}x{cols} matrix"));
        } else {
            for (a, row) in t.distance.iter().enumerate() {
                for (b, d) in row.iter().enumerate() {
                    if let Some(x) = d.0 {
                        ck.scalar(&format!("{p}.distance"), vec![a, b], x, 0.0, inf, false);
                    }
                }
            }
        }
        ck.matrix(&format!("{p}.unit_cost"), &t.unit_cost, rows, cols, 0.0, inf);
        ck.matrix(&format!("{p}.unit_emission"), &t.unit_emission, rows, cols, 0.0, inf);
    }

    if inst.policy.siting_rules && s.dropoff_locations.is_none() {
        ck.report.push("policy.siting_rules", vec![], "siting rules need sets.dropoff_locations");
    }

    report.issues.sort();
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundled;

    #[test]
    fn bundled_example_is_valid() {
        let inst = bundled::example_network();
        let report = inst.validate();
        assert!(report.is_valid(), "{:?}", report.issues);
    }

    #[test]
    fn resale_above_one_is_reported_once() {
        let mut inst = bundled::example_network();
        inst.processing.dropoff.resale[0] = 1.2;
        let report = inst.validate();
        assert_eq!(report.issues.len(), 1);
        assert_eq!(report.issues[0].symbol, "processing.dropoff.resale");
        assert_eq!(report.issues[0].index, vec![0]);
    }

    #[test]
    fn product_two_composition_is_within_bounds() {
        let inst = bundled::example_network();
        let total: f64 = inst.processing.composition.iter().map(|r| r[1]).sum();
        assert!((total - 0.6624).abs() < 1e-12);
        assert!(inst.validate().is_valid());
    }

    #[test]
    fn min_shipment_above_capacity_is_reported() {
        let mut inst = bundled::example_network();
        inst.processing.primary.capacity = Some(vec![vec![100.0; 3]; 2]);
        inst.processing.primary.min_shipment = Some(vec![vec![0.0; 3]; 2]);
        inst.processing.primary.min_shipment.as_mut().unwrap()[1][2] = 150.0;
        let report = inst.validate();
        assert_eq!(report.issues.len(), 1);
        assert_eq!(report.issues[0].index, vec![1, 2]);
    }

    #[test]
    fn duplicate_and_empty_sets() {
        let mut inst = bundled::example_network();
        inst.sets.dropoffs = vec!["a".into(), "a".into()];
        inst.sets.materials.clear();
        let report = inst.validate();
        assert!(report.issues.iter().any(|i| i.symbol == "sets.dropoffs" && i.message.contains("duplicate")));
        assert!(report.issues.iter().any(|i| i.symbol == "sets.materials"));
    }

    #[test]
    fn trip_multiplier_modes() {
        let mut inst = bundled::example_network();
        // lumped mode: factor 1, ty = 500, df = 0.5
        assert!((inst.trip_multiplier(0, 0).unwrap() - 250.0).abs() < 1e-12);

        inst.supply.population = Some(vec![1000.0, 1000.0]);
        inst.supply.household_size = 2.0;
        inst.supply.participation = 1.0;
        assert!((inst.trip_multiplier(0, 0).unwrap() - 125_000.0).abs() < 1e-9);

        inst.supply.participation = 0.0;
        assert_eq!(inst.trip_multiplier(1, 1).unwrap(), 0.0);

        inst.supply.household_size = 0.0;
        assert!(matches!(inst.trip_multiplier(0, 0), Err(Error::Config(_))));
    }

    #[test]
    fn forbidden_distance_round_trips() {
        let mut inst = bundled::example_network();
        inst.arcs.drop_pri.distance[0][1] = Distance::FORBIDDEN;
        let text = inst.to_json().unwrap();
        assert!(text.contains("\"forbidden\""));
        let back = NetworkInstance::from_json(&text).unwrap();
        assert_eq!(back, inst);
    }

    #[test]
    fn csv_imports_overwrite_tables() {
        let mut inst = bundled::example_network();
        let arcs = "arc,from,to,distance,unit_cost,unit_emission\nres-drop,area-1,drop-2,42,0.5,0.3\ndrop-pri,drop-1,pri-1,-,0.115,0.152\n";
        assert_eq!(inst.import_arcs_csv(arcs.as_bytes()).unwrap(), 2);
        assert_eq!(inst.arcs.res_drop.km(0, 1), Some(42.0));
        assert!(inst.arcs.drop_pri.distance[0][0].is_forbidden());

        let proc = "tier,item,facility,cost,credit,emission,offset\nprimary,product-2,pri-3,0.7,1.6,0.05,6.0\n";
        assert_eq!(inst.import_processing_csv(proc.as_bytes()).unwrap(), 1);
        assert_eq!(inst.processing.primary.cost[1][2], 0.7);
        assert_eq!(inst.processing.primary.offset[1][2], 6.0);

        let bad = "arc,from,to,distance,unit_cost,unit_emission\nres-drop,nowhere,drop-2,1,1,1\n";
        assert!(inst.import_arcs_csv(bad.as_bytes()).is_err());
    }
}
