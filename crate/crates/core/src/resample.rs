//! Trilinear resampling with clamp-to-edge boundaries, and the analytic
//! derivative of the sampled value with respect to the sampling position.

use crate::volume::{Grid3, Shape3, Volume3};

/// Interpolation cell along one axis.
#[derive(Clone, Copy)]
struct AxisCell {
    lo: usize,
    frac: f64,
    /// 1 inside `[0, D-1]`; 0 where the coordinate was clamped.
    slope: f64,
}

#[inline]
fn axis_cell(x: f64, extent: usize) -> AxisCell {
    let hi = (extent - 1) as f64;
    let slope = if (0.0..=hi).contains(&x) { 1.0 } else { 0.0 };
    let xc = x.clamp(0.0, hi);
    // Lattice points use the cell above; the last point uses the cell below.
    let lo = (xc.floor() as usize).min(extent - 2);
    AxisCell {
        lo,
        frac: xc - lo as f64,
        slope,
    }
}

/// Samples every channel of `vol` at the flat coordinate list `coords`
/// (three values per point). When `grad` is given it receives
/// `d value / d coord` laid out as `(point, channel, axis)`.
pub(crate) fn sample_points(
    vol: &Volume3,
    coords: &[f64],
    out: &mut [f64],
    mut grad: Option<&mut [f64]>,
) {
    let [d1, d2, d3] = vol.shape().dims();
    let ch = vol.channels();
    let data = vol.data();
    let s1 = d2 * d3 * ch;
    let s2 = d3 * ch;
    let s3 = ch;

    for (n, p) in coords.chunks_exact(3).enumerate() {
        let cx = axis_cell(p[0], d1);
        let cy = axis_cell(p[1], d2);
        let cz = axis_cell(p[2], d3);
        let (fx, fy, fz) = (cx.frac, cy.frac, cz.frac);
        let base = cx.lo * s1 + cy.lo * s2 + cz.lo * s3;

        for c in 0..ch {
            let b = base + c;
            let v000 = data[b];
            let v001 = data[b + s3];
            let v010 = data[b + s2];
            let v011 = data[b + s2 + s3];
            let v100 = data[b + s1];
            let v101 = data[b + s1 + s3];
            let v110 = data[b + s1 + s2];
            let v111 = data[b + s1 + s2 + s3];

            // Interpolate along z, then y, then x.
            let c00 = v000 * (1.0 - fz) + v001 * fz;
            let c01 = v010 * (1.0 - fz) + v011 * fz;
            let c10 = v100 * (1.0 - fz) + v101 * fz;
            let c11 = v110 * (1.0 - fz) + v111 * fz;
            let c0 = c00 * (1.0 - fy) + c01 * fy;
            let c1 = c10 * (1.0 - fy) + c11 * fy;
            out[n * ch + c] = c0 * (1.0 - fx) + c1 * fx;

            if let Some(g) = grad.as_deref_mut() {
                let gx = (c1 - c0) * cx.slope;
                let gy = ((c01 - c00) * (1.0 - fx) + (c11 - c10) * fx) * cy.slope;
                let dz00 = v001 - v000;
                let dz01 = v011 - v010;
                let dz10 = v101 - v100;
                let dz11 = v111 - v110;
                let gz = ((dz00 * (1.0 - fy) + dz01 * fy) * (1.0 - fx)
                    + (dz10 * (1.0 - fy) + dz11 * fy) * fx)
                    * cz.slope;
                let o = (n * ch + c) * 3;
                g[o] = gx;
                g[o + 1] = gy;
                g[o + 2] = gz;
            }
        }
    }
}

/// Resamples `vol` at the positions in `loc`. The output takes the shape of
/// `loc` and the channel count of `vol`.
pub fn resample(vol: &Volume3, loc: &Grid3) -> Volume3 {
    let shape = loc.shape();
    let mut out = vec![0.0; shape.voxels() * vol.channels()];
    sample_points(vol, loc.coords(), &mut out, None);
    Volume3::from_parts(shape, vol.channels(), out)
}

/// Derivative of resampled values with respect to the sampling coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordGradient {
    shape: Shape3,
    channels: usize,
    data: Vec<f64>,
}

impl CoordGradient {
    pub fn shape(&self) -> Shape3 {
        self.shape
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Flat data laid out as `(voxel, channel, axis)`.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize, k: usize, c: usize) -> [f64; 3] {
        let o = (self.shape.voxel_index(i, j, k) * self.channels + c) * 3;
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }
}

/// Analytic `d resample(vol, loc) / d loc` for every output voxel and channel.
pub fn resample_grad_loc(vol: &Volume3, loc: &Grid3) -> CoordGradient {
    let shape = loc.shape();
    let ch = vol.channels();
    let mut out = vec![0.0; shape.voxels() * ch];
    let mut grad = vec![0.0; shape.voxels() * ch * 3];
    sample_points(vol, loc.coords(), &mut out, Some(&mut grad));
    CoordGradient {
        shape,
        channels: ch,
        data: grad,
    }
}
