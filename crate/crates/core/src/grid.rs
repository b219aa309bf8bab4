//! Finite-volume grids for the particle radii and the cell thickness.

use crate::error::{Error, Result};
use crate::params::{CellParameters, Electrode, Region};

/// Node counts for every discretized domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridResolution {
    pub n_r_neg: usize,
    pub n_r_pos: usize,
    pub n_x_neg: usize,
    pub n_x_sep: usize,
    pub n_x_pos: usize,
}

impl Default for GridResolution {
    fn default() -> Self {
        Self {
            n_r_neg: 20,
            n_r_pos: 20,
            n_x_neg: 10,
            n_x_sep: 6,
            n_x_pos: 10,
        }
    }
}

impl GridResolution {
    pub fn uniform(n_r: usize, n_x: usize) -> Self {
        Self {
            n_r_neg: n_r,
            n_r_pos: n_r,
            n_x_neg: n_x,
            n_x_sep: n_x,
            n_x_pos: n_x,
        }
    }

    pub fn refined(&self, factor: usize) -> Self {
        Self {
            n_r_neg: self.n_r_neg * factor,
            n_r_pos: self.n_r_pos * factor,
            n_x_neg: self.n_x_neg * factor,
            n_x_sep: self.n_x_sep * factor,
            n_x_pos: self.n_x_pos * factor,
        }
    }
}

/// Cell-centred radial grid on a sphere of radius `radius`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    pub radius: f64,
    /// n + 1 face radii, first 0, last `radius`.
    pub faces: Vec<f64>,
    pub centers: Vec<f64>,
    pub widths: Vec<f64>,
    /// Shell volumes divided by 4π.
    pub shell_volumes: Vec<f64>,
}

impl RadialGrid {
    pub fn uniform(radius: f64, n: usize) -> Self {
        let h = radius / n as f64;
        let mut faces: Vec<f64> = (0..=n).map(|i| i as f64 * h).collect();
        faces[n] = radius;
        let centers = faces.windows(2).map(|f| 0.5 * (f[0] + f[1])).collect();
        let widths = faces.windows(2).map(|f| f[1] - f[0]).collect();
        let shell_volumes = faces
            .windows(2)
            .map(|f| (f[1].powi(3) - f[0].powi(3)) / 3.0)
            .collect();
        Self {
            radius,
            faces,
            centers,
            widths,
            shell_volumes,
        }
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Particle volume divided by 4π.
    pub fn total_volume(&self) -> f64 {
        self.radius.powi(3) / 3.0
    }

    /// Volume average of a field defined on the cell centres.
    pub fn average(&self, field: &[f64]) -> f64 {
        let s: f64 = field.iter().zip(&self.shell_volumes).map(|(c, v)| c * v).sum();
        s / self.total_volume()
    }
}

/// Cell-centred grid across negative electrode, separator and positive electrode.
#[derive(Debug, Clone, PartialEq)]
pub struct AxialGrid {
    pub faces: Vec<f64>,
    pub centers: Vec<f64>,
    pub widths: Vec<f64>,
    pub regions: Vec<Region>,
    pub n_neg: usize,
    pub n_sep: usize,
    pub n_pos: usize,
}

impl AxialGrid {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn region_range(&self, r: Region) -> std::ops::Range<usize> {
        match r {
            Region::Negative => 0..self.n_neg,
            Region::Separator => self.n_neg..self.n_neg + self.n_sep,
            Region::Positive => self.n_neg + self.n_sep..self.len(),
        }
    }

    pub fn region_width(&self, r: Region) -> f64 {
        self.widths[self.region_range(r)].iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGrid {
    pub resolution: GridResolution,
    pub r_neg: RadialGrid,
    pub r_pos: RadialGrid,
    pub x: AxialGrid,
}

impl SpatialGrid {
    pub fn radial(&self, e: Electrode) -> &RadialGrid {
        match e {
            Electrode::Negative => &self.r_neg,
            Electrode::Positive => &self.r_pos,
        }
    }
}

pub fn build_grid(params: &CellParameters, resolution: GridResolution) -> Result<SpatialGrid> {
    let counts = [
        ("n_r_neg", resolution.n_r_neg),
        ("n_r_pos", resolution.n_r_pos),
        ("n_x_neg", resolution.n_x_neg),
        ("n_x_sep", resolution.n_x_sep),
        ("n_x_pos", resolution.n_x_pos),
    ];
    for (name, n) in counts {
        if n < 3 {
            return Err(Error::param(name, format!("node count must be at least 3, got {n}")));
        }
    }
    let lengths = [
        ("negative_particle_radius", params.r_neg),
        ("positive_particle_radius", params.r_pos),
        ("negative_thickness", params.l_neg),
        ("separator_thickness", params.l_sep),
        ("positive_thickness", params.l_pos),
    ];
    for (name, l) in lengths {
        if !(l.is_finite() && l > 0.0) {
            return Err(Error::param(name, format!("length must be positive, got {l}")));
        }
    }

    let mut faces = vec![0.0];
    let mut regions = Vec::new();
    let spans = [
        (Region::Negative, 0.0, params.l_neg, resolution.n_x_neg),
        (Region::Separator, params.l_neg, params.l_neg + params.l_sep, resolution.n_x_sep),
        (Region::Positive, params.l_neg + params.l_sep, params.length(), resolution.n_x_pos),
    ];
    for (region, start, end, n) in spans {
        let h = (end - start) / n as f64;
        for i in 1..n {
            faces.push(start + i as f64 * h);
        }
        faces.push(end);
        regions.extend(std::iter::repeat_n(region, n));
    }
    let centers = faces.windows(2).map(|f| 0.5 * (f[0] + f[1])).collect();
    let widths = faces.windows(2).map(|f| f[1] - f[0]).collect();

    Ok(SpatialGrid {
        resolution,
        r_neg: RadialGrid::uniform(params.r_neg, resolution.n_r_neg),
        r_pos: RadialGrid::uniform(params.r_pos, resolution.n_r_pos),
        x: AxialGrid {
            faces,
            centers,
            widths,
            regions,
            n_neg: resolution.n_x_neg,
            n_sep: resolution.n_x_sep,
            n_pos: resolution.n_x_pos,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn radial_widths_tile_radius() {
        let g = RadialGrid::uniform(1e-6, 3);
        let sum: f64 = g.widths.iter().sum();
        assert!(rel(sum, 1e-6) < 1e-12);
        let vol: f64 = g.shell_volumes.iter().sum();
        assert!(rel(vol, g.total_volume()) < 1e-12);
    }

    #[test]
    fn axial_regions_tile_thicknesses() {
        let p = CellParameters::lg_m50();
        let g = build_grid(&p, GridResolution::uniform(5, 10)).unwrap();
        assert_eq!(g.x.region_range(Region::Negative).len(), 10);
        assert!(rel(g.x.region_width(Region::Negative), p.l_neg) < 1e-12);
        assert!(rel(g.x.region_width(Region::Separator), p.l_sep) < 1e-12);
        assert!(rel(g.x.region_width(Region::Positive), p.l_pos) < 1e-12);
        let neg = &g.x.widths[g.x.region_range(Region::Negative)];
        assert!(neg.iter().all(|w| rel(*w, p.l_neg / 10.0) < 1e-12));
        assert!(g.x.faces.windows(2).all(|f| f[1] > f[0]));
        assert!(g.x.centers.windows(2).all(|c| c[1] > c[0]));
        assert_eq!(*g.x.faces.last().unwrap(), p.length());
    }

    #[test]
    fn doubling_nodes_halves_width() {
        let coarse = RadialGrid::uniform(5e-6, 10);
        let fine = RadialGrid::uniform(5e-6, 20);
        let max = |g: &RadialGrid| g.widths.iter().cloned().fold(0.0, f64::max);
        assert!(rel(max(&fine), 0.5 * max(&coarse)) < 1e-12);
    }

    #[test]
    fn rejects_coarse_or_degenerate() {
        let p = CellParameters::lg_m50();
        assert!(build_grid(&p, GridResolution::uniform(2, 10)).is_err());
        let mut bad = p.clone();
        bad.l_sep = 0.0;
        assert!(build_grid(&bad, GridResolution::default()).is_err());
        let mut neg = p;
        neg.r_pos = -1e-6;
        assert!(build_grid(&neg, GridResolution::default()).is_err());
    }
}
