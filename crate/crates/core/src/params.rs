//! Cell and degradation parameter sets and the parameter-file format.
//!
//! The file is line oriented. `#` starts a comment. Scalars are written as
//! `key = value` in SI units. A `[table NAME]` line opens a two-column table
//! whose rows are whitespace separated numbers; the next `key = value` line or
//! table header closes it. Unknown keys and unknown tables are rejected.
//!
//! Current sign convention: positive current charges the cell.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::interp::Table;

pub const FORMAT_TAG: &str = "fastcharge-params-1";

/// The bundled LG M50-class parameter set.
pub const LG_M50: &str = include_str!("../data/lg_m50.params");

/// Seconds per hour, for Ah <-> C conversions.
pub const SECONDS_PER_HOUR: f64 = 3600.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Electrode {
    Negative,
    Positive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Negative,
    Separator,
    Positive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlatingMode {
    Reversible,
    Irreversible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DegradationParams {
    pub enabled: bool,
    /// Bulk solvent concentration (mol/m3).
    pub c_sol_0: f64,
    /// Solvent diffusivity at `t_ref` (m2/s).
    pub d_sol_ref: f64,
    pub e_a_sol: f64,
    pub t_ref: f64,
    /// SEI partial molar volume (m3/mol).
    pub v_bar_sei: f64,
    /// SEI resistivity (ohm m).
    pub rho_sei: f64,
    /// Lithium atoms bound per SEI formula unit.
    pub sei_li_ratio: f64,
    pub l_inner_0: f64,
    pub l_outer_0: f64,
    /// Plating kinetic rate constant (m/s).
    pub k_li: f64,
    pub alpha_a_li: f64,
    pub alpha_c_li: f64,
    /// Dead-lithium decay rate at the initial SEI thickness (1/s).
    pub gamma_0: f64,
    pub u_side: f64,
    pub mode: PlatingMode,
    /// Multiplies `d_sol_ref` and `k_li` for accelerated life tests.
    pub aging_factor: f64,
}

impl DegradationParams {
    /// Arrhenius solvent diffusivity including the ageing factor.
    pub fn d_sol(&self, temperature: f64, gas_constant: f64) -> f64 {
        let arr = (-self.e_a_sol / gas_constant * (1.0 / temperature - 1.0 / self.t_ref)).exp();
        self.d_sol_ref * arr * self.aging_factor
    }

    pub fn k_li_eff(&self) -> f64 {
        self.k_li * self.aging_factor
    }

    /// Dead-lithium decay rate, linear in total SEI thickness.
    pub fn gamma(&self, l_sei_total: f64) -> f64 {
        self.gamma_0 * l_sei_total / (self.l_inner_0 + self.l_outer_0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellParameters {
    pub l_neg: f64,
    pub l_sep: f64,
    pub l_pos: f64,
    pub r_neg: f64,
    pub r_pos: f64,
    pub eps_s_neg: f64,
    pub eps_s_pos: f64,
    pub eps_e_neg: f64,
    pub eps_e_sep: f64,
    pub eps_e_pos: f64,
    pub electrode_area: f64,
    pub d_s_neg: f64,
    pub d_s_pos: f64,
    pub bruggeman: f64,
    pub t_c: f64,
    pub kappa: f64,
    pub k_f: f64,
    pub c_e0: f64,
    pub faraday: f64,
    pub gas_constant: f64,
    pub temperature: f64,
    pub alpha: f64,
    pub k_neg: f64,
    pub k_pos: f64,
    pub c_max_neg: f64,
    pub c_max_pos: f64,
    pub r_f_pos: f64,
    pub q_nominal: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub x_0: f64,
    pub x_100: f64,
    pub y_0: f64,
    pub y_100: f64,
    pub ocp_neg: Table,
    pub ocp_pos: Table,
    pub d_e_bulk: Table,
    pub degradation: DegradationParams,
}

impl CellParameters {
    pub fn lg_m50() -> Self {
        Self::parse(LG_M50).expect("bundled parameter set is valid")
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn length(&self) -> f64 {
        self.l_neg + self.l_sep + self.l_pos
    }

    pub fn a_neg(&self) -> f64 {
        3.0 * self.eps_s_neg / self.r_neg
    }

    pub fn a_pos(&self) -> f64 {
        3.0 * self.eps_s_pos / self.r_pos
    }

    pub fn thickness(&self, e: Electrode) -> f64 {
        match e {
            Electrode::Negative => self.l_neg,
            Electrode::Positive => self.l_pos,
        }
    }

    pub fn surface_area_density(&self, e: Electrode) -> f64 {
        match e {
            Electrode::Negative => self.a_neg(),
            Electrode::Positive => self.a_pos(),
        }
    }

    pub fn particle_radius(&self, e: Electrode) -> f64 {
        match e {
            Electrode::Negative => self.r_neg,
            Electrode::Positive => self.r_pos,
        }
    }

    pub fn solid_diffusivity(&self, e: Electrode) -> f64 {
        match e {
            Electrode::Negative => self.d_s_neg,
            Electrode::Positive => self.d_s_pos,
        }
    }

    pub fn c_max(&self, e: Electrode) -> f64 {
        match e {
            Electrode::Negative => self.c_max_neg,
            Electrode::Positive => self.c_max_pos,
        }
    }

    pub fn rate_constant(&self, e: Electrode) -> f64 {
        match e {
            Electrode::Negative => self.k_neg,
            Electrode::Positive => self.k_pos,
        }
    }

    /// Active material volume of one electrode (m3).
    pub fn active_volume(&self, e: Electrode) -> f64 {
        match e {
            Electrode::Negative => self.eps_s_neg * self.l_neg * self.electrode_area,
            Electrode::Positive => self.eps_s_pos * self.l_pos * self.electrode_area,
        }
    }

    /// Total particle surface of one electrode (m2).
    pub fn interfacial_area(&self, e: Electrode) -> f64 {
        self.surface_area_density(e) * self.thickness(e) * self.electrode_area
    }

    pub fn porosity(&self, r: Region) -> f64 {
        match r {
            Region::Negative => self.eps_e_neg,
            Region::Separator => self.eps_e_sep,
            Region::Positive => self.eps_e_pos,
        }
    }

    pub fn region_length(&self, r: Region) -> f64 {
        match r {
            Region::Negative => self.l_neg,
            Region::Separator => self.l_sep,
            Region::Positive => self.l_pos,
        }
    }

    /// Effective electrolyte diffusivity with Bruggeman correction (m2/s).
    pub fn d_e_eff(&self, c_e: f64, r: Region) -> f64 {
        self.porosity(r).powf(self.bruggeman) * self.d_e_bulk.eval(c_e)
    }

    /// RT/F (V).
    pub fn thermal_voltage(&self) -> f64 {
        self.gas_constant * self.temperature / self.faraday
    }

    pub fn ocp(&self, e: Electrode, stoich: f64) -> f64 {
        match e {
            Electrode::Negative => self.ocp_neg.eval(stoich),
            Electrode::Positive => self.ocp_pos.eval(stoich),
        }
    }

    /// Nominal 1C current (A).
    pub fn one_c(&self) -> f64 {
        self.q_nominal
    }

    /// Capacity of the negative electrode per unit stoichiometry (Ah).
    pub fn negative_capacity_ah(&self) -> f64 {
        self.c_max_neg * self.active_volume(Electrode::Negative) * self.faraday / SECONDS_PER_HOUR
    }

    pub fn with_aging_factor(mut self, factor: f64) -> Self {
        self.degradation.aging_factor = factor;
        self
    }

    pub fn without_degradation(mut self) -> Self {
        self.degradation.enabled = false;
        self
    }

    pub fn parse(text: &str) -> Result<Self> {
        let raw = RawFile::parse(text)?;
        raw.into_params()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("negative_thickness", self.l_neg),
            ("separator_thickness", self.l_sep),
            ("positive_thickness", self.l_pos),
            ("negative_particle_radius", self.r_neg),
            ("positive_particle_radius", self.r_pos),
            ("negative_active_fraction", self.eps_s_neg),
            ("positive_active_fraction", self.eps_s_pos),
            ("negative_porosity", self.eps_e_neg),
            ("separator_porosity", self.eps_e_sep),
            ("positive_porosity", self.eps_e_pos),
            ("electrode_area", self.electrode_area),
            ("negative_solid_diffusivity", self.d_s_neg),
            ("positive_solid_diffusivity", self.d_s_pos),
            ("electrolyte_conductivity", self.kappa),
            ("activity_factor", self.k_f),
            ("initial_electrolyte_concentration", self.c_e0),
            ("faraday", self.faraday),
            ("gas_constant", self.gas_constant),
            ("temperature", self.temperature),
            ("negative_rate_constant", self.k_neg),
            ("positive_rate_constant", self.k_pos),
            ("negative_max_concentration", self.c_max_neg),
            ("positive_max_concentration", self.c_max_pos),
            ("nominal_capacity", self.q_nominal),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::param(name, format!("must be positive, got {v}")));
            }
        }
        let fractions = [
            ("negative_active_fraction", self.eps_s_neg + self.eps_e_neg),
            ("positive_active_fraction", self.eps_s_pos + self.eps_e_pos),
        ];
        for (name, v) in fractions {
            if v > 1.0 {
                return Err(Error::param(name, "solid plus electrolyte fractions exceed one"));
            }
        }
        if !(self.t_c > 0.0 && self.t_c < 1.0) {
            return Err(Error::param("transference_number", "must lie in (0, 1)"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::param("charge_transfer_coefficient", "must lie in (0, 1)"));
        }
        if self.r_f_pos < 0.0 {
            return Err(Error::param("positive_film_resistance", "must be non-negative"));
        }
        if !(self.v_min < self.v_max) {
            return Err(Error::param("voltage_max", "must exceed voltage_min"));
        }
        if !(0.0 <= self.x_0 && self.x_0 < self.x_100 && self.x_100 <= 1.0) {
            return Err(Error::param("stoich_neg_100", "need 0 <= x_0 < x_100 <= 1"));
        }
        if !(0.0 <= self.y_100 && self.y_100 < self.y_0 && self.y_0 <= 1.0) {
            return Err(Error::param("stoich_pos_0", "need 0 <= y_100 < y_0 <= 1"));
        }
        if !self.ocp_neg.is_strictly_decreasing() {
            return Err(Error::param("negative_ocp", "must be strictly decreasing"));
        }
        if !self.ocp_pos.is_strictly_decreasing() {
            return Err(Error::param("positive_ocp", "must be strictly decreasing"));
        }
        if self.d_e_bulk.ys().iter().any(|&d| d <= 0.0) {
            return Err(Error::param("electrolyte_diffusivity", "must be positive"));
        }
        let d = &self.degradation;
        let positive = [
            ("solvent_concentration", d.c_sol_0),
            ("solvent_diffusivity", d.d_sol_ref),
            ("reference_temperature", d.t_ref),
            ("sei_molar_volume", d.v_bar_sei),
            ("sei_resistivity", d.rho_sei),
            ("initial_inner_sei_thickness", d.l_inner_0),
            ("initial_outer_sei_thickness", d.l_outer_0),
            ("plating_rate_constant", d.k_li),
            ("plating_anodic_transfer", d.alpha_a_li),
            ("plating_cathodic_transfer", d.alpha_c_li),
            ("dead_lithium_decay", d.gamma_0),
            ("aging_factor", d.aging_factor),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::param(name, format!("must be positive, got {v}")));
            }
        }
        if d.e_a_sol < 0.0 || d.sei_li_ratio < 0.0 {
            return Err(Error::param("solvent_activation_energy", "must be non-negative"));
        }
        if d.u_side != 0.0 {
            return Err(Error::param(
                "side_reaction_potential",
                "the plating side reaction is referenced to lithium metal and must be 0",
            ));
        }
        Ok(())
    }
}

/// Scalar keys accepted in a parameter file, with optional defaults.
const SCALAR_KEYS: &[(&str, Option<f64>)] = &[
    ("negative_thickness", None),
    ("separator_thickness", None),
    ("positive_thickness", None),
    ("negative_particle_radius", None),
    ("positive_particle_radius", None),
    ("negative_active_fraction", None),
    ("positive_active_fraction", None),
    ("negative_porosity", None),
    ("separator_porosity", None),
    ("positive_porosity", None),
    ("electrode_area", None),
    ("negative_solid_diffusivity", None),
    ("positive_solid_diffusivity", None),
    ("bruggeman", Some(1.5)),
    ("transference_number", None),
    ("electrolyte_conductivity", None),
    ("activity_factor", Some(1.0)),
    ("initial_electrolyte_concentration", None),
    ("faraday", Some(96485.33212)),
    ("gas_constant", Some(8.314462618)),
    ("temperature", None),
    ("charge_transfer_coefficient", Some(0.5)),
    ("negative_rate_constant", None),
    ("positive_rate_constant", None),
    ("negative_max_concentration", None),
    ("positive_max_concentration", None),
    ("positive_film_resistance", Some(0.0)),
    ("nominal_capacity", None),
    ("voltage_min", None),
    ("voltage_max", None),
    ("stoich_neg_0", None),
    ("stoich_neg_100", None),
    ("stoich_pos_0", None),
    ("stoich_pos_100", None),
    ("solvent_concentration", None),
    ("solvent_diffusivity", None),
    ("solvent_activation_energy", Some(0.0)),
    ("reference_temperature", None),
    ("sei_molar_volume", None),
    ("sei_resistivity", None),
    ("sei_lithium_ratio", Some(1.0)),
    ("initial_inner_sei_thickness", None),
    ("initial_outer_sei_thickness", None),
    ("plating_rate_constant", None),
    ("plating_anodic_transfer", None),
    ("plating_cathodic_transfer", None),
    ("dead_lithium_decay", None),
    ("side_reaction_potential", Some(0.0)),
    ("aging_factor", Some(1.0)),
];

const WORD_KEYS: &[(&str, Option<&str>)] = &[
    ("format", None),
    ("plating_mode", Some("irreversible")),
    ("degradation", Some("on")),
];

const TABLES: &[&str] = &["negative_ocp", "positive_ocp", "electrolyte_diffusivity"];

#[derive(Default)]
struct RawFile {
    scalars: BTreeMap<String, (usize, String)>,
    tables: BTreeMap<String, (Vec<f64>, Vec<f64>)>,
}

impl RawFile {
    fn parse(text: &str) -> Result<Self> {
        let mut raw = RawFile::default();
        let mut current: Option<String> = None;
        for (idx, line) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let syntax = |reason: String| Error::ParameterSyntax { line: lineno, reason };
            if let Some(inner) = line.strip_prefix('[') {
                let inner = inner
                    .strip_suffix(']')
                    .ok_or_else(|| syntax("unterminated section header".into()))?;
                let name = inner
                    .trim()
                    .strip_prefix("table")
                    .map(str::trim)
                    .filter(|n| !n.is_empty())
                    .ok_or_else(|| syntax(format!("expected `[table NAME]`, got `[{inner}]`")))?;
                if !TABLES.contains(&name) {
                    return Err(syntax(format!("unknown table `{name}`")));
                }
                if raw.tables.contains_key(name) {
                    return Err(syntax(format!("table `{name}` defined twice")));
                }
                raw.tables.insert(name.to_string(), (Vec::new(), Vec::new()));
                current = Some(name.to_string());
            } else if let Some((key, value)) = line.split_once('=') {
                current = None;
                let key = key.trim();
                let known = SCALAR_KEYS.iter().any(|(k, _)| *k == key)
                    || WORD_KEYS.iter().any(|(k, _)| *k == key);
                if !known {
                    return Err(syntax(format!("unknown key `{key}`")));
                }
                if raw
                    .scalars
                    .insert(key.to_string(), (lineno, value.trim().to_string()))
                    .is_some()
                {
                    return Err(syntax(format!("key `{key}` given twice")));
                }
            } else {
                let table = current
                    .as_ref()
                    .ok_or_else(|| syntax(format!("row `{line}` outside a table")))?;
                let cols: Vec<&str> = line.split_whitespace().collect();
                if cols.len() != 2 {
                    return Err(syntax(format!("expected two columns, got {}", cols.len())));
                }
                let parse = |s: &str| {
                    s.parse::<f64>()
                        .map_err(|_| syntax(format!("`{s}` is not a number")))
                };
                let (x, y) = (parse(cols[0])?, parse(cols[1])?);
                let entry = raw.tables.get_mut(table).expect("table registered");
                entry.0.push(x);
                entry.1.push(y);
            }
        }
        Ok(raw)
    }

    fn scalar(&self, key: &str) -> Result<f64> {
        let default = SCALAR_KEYS
            .iter()
            .find(|(k, _)| *k == key)
            .and_then(|(_, d)| *d);
        match self.scalars.get(key) {
            Some((line, v)) => v.parse::<f64>().map_err(|_| Error::ParameterSyntax {
                line: *line,
                reason: format!("`{key}` expects a number, got `{v}`"),
            }),
            None => default.ok_or_else(|| Error::param(key, "missing")),
        }
    }

    fn word(&self, key: &str) -> Result<String> {
        let default = WORD_KEYS
            .iter()
            .find(|(k, _)| *k == key)
            .and_then(|(_, d)| *d);
        match self.scalars.get(key) {
            Some((_, v)) => Ok(v.clone()),
            None => default
                .map(str::to_string)
                .ok_or_else(|| Error::param(key, "missing")),
        }
    }

    fn table(&self, name: &str) -> Result<Table> {
        let (xs, ys) = self
            .tables
            .get(name)
            .ok_or_else(|| Error::param(name, "missing table"))?;
        Table::new(name, xs.clone(), ys.clone())
    }

    fn into_params(self) -> Result<CellParameters> {
        let format = self.word("format")?;
        if format != FORMAT_TAG {
            return Err(Error::param("format", format!("expected `{FORMAT_TAG}`, got `{format}`")));
        }
        let mode = match self.word("plating_mode")?.as_str() {
            "irreversible" => PlatingMode::Irreversible,
            "reversible" => PlatingMode::Reversible,
            other => {
                return Err(Error::param(
                    "plating_mode",
                    format!("expected `reversible` or `irreversible`, got `{other}`"),
                ))
            }
        };
        let enabled = match self.word("degradation")?.as_str() {
            "on" => true,
            "off" => false,
            other => return Err(Error::param("degradation", format!("expected `on` or `off`, got `{other}`"))),
        };
        let s = |k: &str| self.scalar(k);
        let degradation = DegradationParams {
            enabled,
            c_sol_0: s("solvent_concentration")?,
            d_sol_ref: s("solvent_diffusivity")?,
            e_a_sol: s("solvent_activation_energy")?,
            t_ref: s("reference_temperature")?,
            v_bar_sei: s("sei_molar_volume")?,
            rho_sei: s("sei_resistivity")?,
            sei_li_ratio: s("sei_lithium_ratio")?,
            l_inner_0: s("initial_inner_sei_thickness")?,
            l_outer_0: s("initial_outer_sei_thickness")?,
            k_li: s("plating_rate_constant")?,
            alpha_a_li: s("plating_anodic_transfer")?,
            alpha_c_li: s("plating_cathodic_transfer")?,
            gamma_0: s("dead_lithium_decay")?,
            u_side: s("side_reaction_potential")?,
            mode,
            aging_factor: s("aging_factor")?,
        };
        let p = CellParameters {
            l_neg: s("negative_thickness")?,
            l_sep: s("separator_thickness")?,
            l_pos: s("positive_thickness")?,
            r_neg: s("negative_particle_radius")?,
            r_pos: s("positive_particle_radius")?,
            eps_s_neg: s("negative_active_fraction")?,
            eps_s_pos: s("positive_active_fraction")?,
            eps_e_neg: s("negative_porosity")?,
            eps_e_sep: s("separator_porosity")?,
            eps_e_pos: s("positive_porosity")?,
            electrode_area: s("electrode_area")?,
            d_s_neg: s("negative_solid_diffusivity")?,
            d_s_pos: s("positive_solid_diffusivity")?,
            bruggeman: s("bruggeman")?,
            t_c: s("transference_number")?,
            kappa: s("electrolyte_conductivity")?,
            k_f: s("activity_factor")?,
            c_e0: s("initial_electrolyte_concentration")?,
            faraday: s("faraday")?,
            gas_constant: s("gas_constant")?,
            temperature: s("temperature")?,
            alpha: s("charge_transfer_coefficient")?,
            k_neg: s("negative_rate_constant")?,
            k_pos: s("positive_rate_constant")?,
            c_max_neg: s("negative_max_concentration")?,
            c_max_pos: s("positive_max_concentration")?,
            r_f_pos: s("positive_film_resistance")?,
            q_nominal: s("nominal_capacity")?,
            v_min: s("voltage_min")?,
            v_max: s("voltage_max")?,
            x_0: s("stoich_neg_0")?,
            x_100: s("stoich_neg_100")?,
            y_0: s("stoich_pos_0")?,
            y_100: s("stoich_pos_100")?,
            ocp_neg: self.table("negative_ocp")?,
            ocp_pos: self.table("positive_ocp")?,
            d_e_bulk: self.table("electrolyte_diffusivity")?,
            degradation,
        };
        p.validate()?;
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_set_loads() {
        let p = CellParameters::lg_m50();
        assert_eq!(p.degradation.d_sol_ref, 2.5e-22);
        assert_eq!(p.degradation.k_li, 1e-11);
        assert_eq!(p.degradation.mode, PlatingMode::Irreversible);
        assert!((p.a_neg() - 3.0 * 0.75 / 5.86e-6).abs() < 1e-6);
        // nominal capacity sits inside the stoichiometry window capacity
        let window_ah = (p.x_100 - p.x_0) * p.negative_capacity_ah();
        assert!((window_ah - p.q_nominal).abs() / p.q_nominal < 0.04, "{window_ah}");
    }

    #[test]
    fn ocv_window_matches_voltage_limits() {
        let p = CellParameters::lg_m50();
        let full = p.ocp_pos.eval(p.y_100) - p.ocp_neg.eval(p.x_100);
        let empty = p.ocp_pos.eval(p.y_0) - p.ocp_neg.eval(p.x_0);
        assert!((full - p.v_max).abs() < 2e-3, "{full}");
        assert!((empty - p.v_min).abs() < 2e-2, "{empty}");
    }

    #[test]
    fn unknown_key_rejected() {
        let text = format!("{LG_M50}\nbogus_key = 1\n");
        let err = CellParameters::parse(&text).unwrap_err();
        assert!(err.to_string().contains("bogus_key"), "{err}");
    }

    #[test]
    fn unknown_table_rejected() {
        let text = format!("{LG_M50}\n[table mystery]\n0 1\n1 2\n");
        assert!(CellParameters::parse(&text).is_err());
    }

    #[test]
    fn duplicate_key_rejected() {
        let text = format!("{LG_M50}\ntemperature = 300\n");
        assert!(CellParameters::parse(&text).is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        let bad_length = LG_M50.replace("negative_thickness = 85.2e-6", "negative_thickness = 0");
        assert!(CellParameters::parse(&bad_length).is_err());
        let bad_tc = LG_M50.replace("transference_number = 0.38", "transference_number = 1.2");
        assert!(CellParameters::parse(&bad_tc).is_err());
        let bad_side =
            LG_M50.replace("side_reaction_potential = 0.0", "side_reaction_potential = 0.1");
        assert!(CellParameters::parse(&bad_side).is_err());
    }

    #[test]
    fn arrhenius_reference_and_ageing() {
        let p = CellParameters::lg_m50();
        let d = &p.degradation;
        assert_eq!(d.d_sol(d.t_ref, p.gas_constant), 2.5e-22);
        let fast = p.clone().with_aging_factor(100.0);
        assert!((fast.degradation.d_sol(d.t_ref, p.gas_constant) - 2.5e-20).abs() < 1e-34);
        assert!(d.d_sol(d.t_ref + 10.0, p.gas_constant) > d.d_sol_ref);
    }
}
