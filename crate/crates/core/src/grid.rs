//! Uniform Cartesian grid geometry shared by the operator kernels.

use crate::spec::GridSpec;

/// Flattened-grid geometry. Axis 0 is the fastest-varying index.
#[derive(Debug, Clone)]
pub(crate) struct GridGeometry {
    pub dims: usize,
    pub points: Vec<usize>,
    pub mins: Vec<f64>,
    pub steps: Vec<f64>,
    pub strides: Vec<usize>,
    pub sites: usize,
    /// Product of the axis steps: the quadrature weight of one site.
    pub volume_element: f64,
}

impl GridGeometry {
    pub fn new(grid: &GridSpec) -> GridGeometry {
        let dims = grid.points.len();
        let points: Vec<usize> = grid.points.iter().map(|&p| p as usize).collect();
        let steps: Vec<f64> = (0..dims).map(|a| grid.axis_step(a)).collect();
        let mut strides = vec![1usize; dims];
        for a in 1..dims {
            strides[a] = strides[a - 1] * points[a - 1];
        }
        let sites = points.iter().product();
        let volume_element = steps.iter().product();
        GridGeometry {
            dims,
            points,
            mins: grid.min.clone(),
            steps,
            strides,
            sites,
            volume_element,
        }
    }

    /// Physical coordinate along one axis of a flattened site.
    pub fn coord(&self, site: usize, axis: usize) -> f64 {
        let i = (site / self.strides[axis]) % self.points[axis];
        self.mins[axis] + self.steps[axis] * i as f64
    }

    /// Euclidean distance between two flattened sites.
    pub fn distance(&self, site_a: usize, site_b: usize) -> f64 {
        (0..self.dims)
            .map(|a| {
                let d = self.coord(site_a, a) - self.coord(site_b, a);
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Index along `axis` of a flattened site.
    pub fn axis_index(&self, site: usize, axis: usize) -> usize {
        (site / self.strides[axis]) % self.points[axis]
    }
}
