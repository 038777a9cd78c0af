//! Differential multi-memristor crossbar arrays.
//!
//! A `P x Q` crossbar holds one synapse per node and `2N` devices per synapse:
//! `N` devices on the potentiation (`G+`) side and `N` on the depression
//! (`G-`) side. Device storage follows the `(polarity, k, row, col)` layout so
//! that device masks have shape `(2, N, P, Q)`.

use std::io::Write;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::device::{DeviceModelParams, DeviceState};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarity {
    Plus,
    Minus,
}

impl Polarity {
    pub const BOTH: [Polarity; 2] = [Polarity::Plus, Polarity::Minus];

    fn index(self) -> usize {
        match self {
            Polarity::Plus => 0,
            Polarity::Minus => 1,
        }
    }

    /// Side that has to be potentiated to move a weight in the direction of `x`.
    pub fn for_change(x: f64) -> Polarity {
        if x >= 0.0 {
            Polarity::Plus
        } else {
            Polarity::Minus
        }
    }

    fn symbol(self) -> char {
        match self {
            Polarity::Plus => '+',
            Polarity::Minus => '-',
        }
    }
}

/// Dimensions of a crossbar: `n` devices per polarity on a `rows x cols` grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub n: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Shape {
    pub fn synapses(&self) -> usize {
        self.rows * self.cols
    }

    pub fn devices(&self) -> usize {
        2 * self.n * self.synapses()
    }

    #[inline]
    pub fn device_index(&self, polarity: Polarity, k: usize, row: usize, col: usize) -> usize {
        debug_assert!(k < self.n && row < self.rows && col < self.cols);
        ((polarity.index() * self.n + k) * self.rows + row) * self.cols + col
    }

    #[inline]
    pub fn synapse_index(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }

    /// Inverse of [`Shape::device_index`].
    pub fn locate(&self, idx: usize) -> (Polarity, usize, usize, usize) {
        let col = idx % self.cols;
        let rest = idx / self.cols;
        let row = rest % self.rows;
        let rest = rest / self.rows;
        let k = rest % self.n;
        let polarity = if rest / self.n == 0 {
            Polarity::Plus
        } else {
            Polarity::Minus
        };
        (polarity, k, row, col)
    }
}

/// Device-level boolean mask of shape `(2, n, rows, cols)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    shape: Shape,
    bits: Vec<bool>,
}

impl Mask {
    pub fn none(shape: Shape) -> Self {
        Self {
            shape,
            bits: vec![false; shape.devices()],
        }
    }

    pub fn all(shape: Shape) -> Self {
        Self {
            shape,
            bits: vec![true; shape.devices()],
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn set(&mut self, polarity: Polarity, k: usize, row: usize, col: usize, on: bool) {
        let idx = self.shape.device_index(polarity, k, row, col);
        self.bits[idx] = on;
    }

    pub fn get(&self, polarity: Polarity, k: usize, row: usize, col: usize) -> bool {
        self.bits[self.shape.device_index(polarity, k, row, col)]
    }
}

/// Synapse-level boolean mask of shape `(rows, cols)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SynapseMask {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
}

impl SynapseMask {
    pub fn none(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            bits: vec![false; rows * cols],
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, on: bool) {
        self.bits[row * self.cols + col] = on;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Synapses selected by either mask.
    pub fn union(&self, other: &SynapseMask) -> SynapseMask {
        assert_eq!(self.dims(), other.dims(), "mask shapes differ");
        SynapseMask {
            rows: self.rows,
            cols: self.cols,
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(a, b)| *a || *b)
                .collect(),
        }
    }

    pub fn iter_selected(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let cols = self.cols;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i / cols, i % cols))
    }
}

/// Per-device SET pulse counts plus the synapses to refresh beforehand.
///
/// Plans are produced by the updaters and consumed by [`Crossbar::apply_plan`].
#[derive(Debug, Clone, PartialEq)]
pub struct PulsePlan {
    shape: Shape,
    pulses: Vec<u32>,
    /// Synapses refreshed (reset and reprogrammed to their current
    /// difference) before any pulse is applied.
    pub pre_reset: SynapseMask,
    /// Synapses reset to HRS on both sides, without reprogramming, before any
    /// pulse is applied. Used by the update-ready criterion, whose pulses
    /// already encode the full post-update target.
    pub pre_clear: SynapseMask,
    queue_advance: Vec<usize>,
}

impl PulsePlan {
    pub fn empty(shape: Shape) -> Self {
        Self {
            shape,
            pulses: vec![0; shape.devices()],
            pre_reset: SynapseMask::none(shape.rows, shape.cols),
            pre_clear: SynapseMask::none(shape.rows, shape.cols),
            queue_advance: vec![0; shape.synapses()],
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn pulses(&self, polarity: Polarity, k: usize, row: usize, col: usize) -> u32 {
        self.pulses[self.shape.device_index(polarity, k, row, col)]
    }

    /// Sets an explicit pulse count on one device, bypassing the circular queue.
    pub fn set_pulses(&mut self, polarity: Polarity, k: usize, row: usize, col: usize, m: u32) {
        let idx = self.shape.device_index(polarity, k, row, col);
        self.pulses[idx] = m;
    }

    pub fn total_pulses(&self) -> u64 {
        self.pulses.iter().map(|&m| u64::from(m)).sum()
    }

    /// Total planned pulses on one side of a synapse.
    pub fn synapse_pulses(&self, polarity: Polarity, row: usize, col: usize) -> u32 {
        (0..self.shape.n)
            .map(|k| self.pulses(polarity, k, row, col))
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.pulses.iter().all(|&m| m == 0) && self.pre_reset.is_empty() && self.pre_clear.is_empty()
    }

    pub fn queue_advance(&self, row: usize, col: usize) -> usize {
        self.queue_advance[self.shape.synapse_index(row, col)]
    }

    /// Remove every pulse of one synapse (both sides) and its queue advance.
    pub fn clear_synapse(&mut self, row: usize, col: usize) {
        for polarity in Polarity::BOTH {
            for k in 0..self.shape.n {
                self.set_pulses(polarity, k, row, col, 0);
            }
        }
        let s = self.shape.synapse_index(row, col);
        self.queue_advance[s] = 0;
    }
}

/// Outcome of [`Crossbar::apply_plan`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ApplyStats {
    /// SET pulses applied, including refresh reprogramming.
    pub pulses: u64,
    /// Synapses refreshed or cleared.
    pub refreshed: u64,
    /// Distinct devices that received at least one SET pulse.
    pub programmed_devices: u64,
}

impl std::ops::AddAssign for ApplyStats {
    fn add_assign(&mut self, rhs: Self) {
        self.pulses += rhs.pulses;
        self.refreshed += rhs.refreshed;
        self.programmed_devices += rhs.programmed_devices;
    }
}

/// Default weight-per-µS factor mapping full-scale conductance of `n` devices
/// to `|W| = 1`.
pub fn default_beta(params: &DeviceModelParams, n: usize) -> f64 {
    1.0 / (n as f64 * (params.g_max - params.g_min))
}

#[derive(Debug, Clone)]
pub struct Crossbar {
    shape: Shape,
    params: DeviceModelParams,
    devices: Vec<DeviceState>,
    queue_ptr: Vec<usize>,
    clock: f64,
    rng: ChaCha8Rng,
    refresh_count: u64,
}

impl Crossbar {
    /// A crossbar with every device HRS-initialized at time zero.
    pub fn new(
        rows: usize,
        cols: usize,
        n: usize,
        params: DeviceModelParams,
        seed: u64,
    ) -> Result<Self> {
        params.validate()?;
        if rows == 0 || cols == 0 || n == 0 {
            return Err(Error::config(format!(
                "crossbar dimensions must be positive, got {rows}x{cols} with n={n}"
            )));
        }
        let shape = Shape { n, rows, cols };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let devices = (0..shape.devices())
            .map(|_| DeviceState::fresh(&params, 0.0, &mut rng))
            .collect();
        Ok(Self {
            shape,
            params,
            devices,
            queue_ptr: vec![0; shape.synapses()],
            clock: 0.0,
            rng,
            refresh_count: 0,
        })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn params(&self) -> &DeviceModelParams {
        &self.params
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    /// Total synapses refreshed over the crossbar's lifetime.
    pub fn refresh_count(&self) -> u64 {
        self.refresh_count
    }

    pub fn advance_clock(&mut self, dt: f64) -> Result<()> {
        if !dt.is_finite() || dt < 0.0 {
            return Err(Error::Precondition(format!(
                "clock must advance by a finite non-negative amount, got {dt}"
            )));
        }
        self.clock += dt;
        Ok(())
    }

    pub fn device(&self, polarity: Polarity, k: usize, row: usize, col: usize) -> &DeviceState {
        &self.devices[self.shape.device_index(polarity, k, row, col)]
    }

    pub fn device_mut(
        &mut self,
        polarity: Polarity,
        k: usize,
        row: usize,
        col: usize,
    ) -> &mut DeviceState {
        let idx = self.shape.device_index(polarity, k, row, col);
        &mut self.devices[idx]
    }

    pub fn devices(&self) -> &[DeviceState] {
        &self.devices
    }

    pub fn queue_ptr(&self, row: usize, col: usize) -> usize {
        self.queue_ptr[self.shape.synapse_index(row, col)]
    }

    /// Stored (noiseless, undrifted) conductance sums `(sum G+, sum G-)`.
    pub fn synapse_sums(&self, row: usize, col: usize) -> (f64, f64) {
        let sum = |polarity| {
            (0..self.shape.n)
                .map(|k| self.device(polarity, k, row, col).g)
                .sum::<f64>()
        };
        (sum(Polarity::Plus), sum(Polarity::Minus))
    }

    fn synapse_max(&self, row: usize, col: usize) -> f64 {
        Polarity::BOTH
            .iter()
            .flat_map(|&p| (0..self.shape.n).map(move |k| (p, k)))
            .map(|(p, k)| self.device(p, k, row, col).g)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn check_shape(&self, shape: Shape) -> Result<()> {
        if shape != self.shape {
            return Err(Error::config(format!(
                "shape {shape:?} does not match crossbar {:?}",
                self.shape
            )));
        }
        Ok(())
    }

    /// One SET pulse on every selected device at the current clock.
    pub fn set(&mut self, mask: &Mask) -> Result<u64> {
        self.check_shape(mask.shape())?;
        let mut applied = 0;
        for (dev, _) in self.devices.iter_mut().zip(&mask.bits).filter(|(_, &b)| b) {
            dev.apply_set(&self.params, self.clock, &mut self.rng)?;
            applied += 1;
        }
        Ok(applied)
    }

    /// RESET every selected device at the current clock.
    pub fn reset(&mut self, mask: &Mask) -> Result<()> {
        self.check_shape(mask.shape())?;
        for (dev, _) in self.devices.iter_mut().zip(&mask.bits).filter(|(_, &b)| b) {
            dev.reset(&self.params, self.clock, &mut self.rng);
        }
        Ok(())
    }

    /// READ every device at the current clock, in device-index order.
    pub fn read_all(&mut self) -> Result<Vec<f64>> {
        let (params, clock, rng) = (&self.params, self.clock, &mut self.rng);
        self.devices
            .iter()
            .map(|d| d.read(params, clock, rng))
            .collect()
    }

    /// Effective weights `W = beta * (sum G+ - sum G-)`, one read per device.
    pub fn read_effective(&mut self, beta: f64) -> Result<Array2<f64>> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::config(format!("beta must be positive, got {beta}")));
        }
        let reads = self.read_all()?;
        let Shape { n, rows, cols } = self.shape;
        let mut w = Array2::zeros((rows, cols));
        for k in 0..n {
            for r in 0..rows {
                for c in 0..cols {
                    let plus = reads[self.shape.device_index(Polarity::Plus, k, r, c)];
                    let minus = reads[self.shape.device_index(Polarity::Minus, k, r, c)];
                    w[[r, c]] += plus - minus;
                }
            }
        }
        w.mapv_inplace(|d| beta * d);
        Ok(w)
    }

    /// Synapses where some device exceeds `g_hi` while the pair difference is
    /// below `d_lo`, judged on stored conductances.
    pub fn needs_refresh(&self, g_hi: f64, d_lo: f64) -> SynapseMask {
        let mut mask = SynapseMask::none(self.shape.rows, self.shape.cols);
        for r in 0..self.shape.rows {
            for c in 0..self.shape.cols {
                let (plus, minus) = self.synapse_sums(r, c);
                if self.synapse_max(r, c) > g_hi && (plus - minus).abs() < d_lo {
                    mask.set(r, c, true);
                }
            }
        }
        mask
    }

    /// Adds `m` pulses on `polarity` of synapse `(row, col)` to `plan`,
    /// distributed one at a time over the circular device queue.
    pub fn queue_pulses(
        &self,
        plan: &mut PulsePlan,
        row: usize,
        col: usize,
        polarity: Polarity,
        m: u32,
    ) {
        debug_assert_eq!(plan.shape, self.shape);
        let n = self.shape.n;
        let s = self.shape.synapse_index(row, col);
        let start = self.queue_ptr[s] + plan.queue_advance[s];
        for j in 0..m as usize {
            let k = (start + j) % n;
            plan.pulses[self.shape.device_index(polarity, k, row, col)] += 1;
        }
        plan.queue_advance[s] += m as usize;
    }

    fn clear_synapse(&mut self, row: usize, col: usize) {
        for polarity in Polarity::BOTH {
            for k in 0..self.shape.n {
                let idx = self.shape.device_index(polarity, k, row, col);
                self.devices[idx].reset(&self.params, self.clock, &mut self.rng);
            }
        }
    }

    fn pulse_device(&mut self, idx: usize, m: u32) -> Result<()> {
        for _ in 0..m {
            self.devices[idx].apply_set(&self.params, self.clock, &mut self.rng)?;
        }
        Ok(())
    }

    fn refresh_one(&mut self, row: usize, col: usize, touched: &mut [bool]) -> Result<u64> {
        let (plus, minus) = self.synapse_sums(row, col);
        let d = plus - minus;
        self.clear_synapse(row, col);
        let m = (d.abs() / self.params.pulse_quantum()).round() as u32;
        if m == 0 {
            return Ok(0);
        }
        let mut plan = PulsePlan::empty(self.shape);
        self.queue_pulses(&mut plan, row, col, Polarity::for_change(d), m);
        for polarity in Polarity::BOTH {
            for k in 0..self.shape.n {
                let idx = self.shape.device_index(polarity, k, row, col);
                let pulses = plan.pulses[idx];
                if pulses > 0 {
                    self.pulse_device(idx, pulses)?;
                    touched[idx] = true;
                }
            }
        }
        let s = self.shape.synapse_index(row, col);
        self.queue_ptr[s] = (self.queue_ptr[s] + m as usize) % self.shape.n;
        Ok(u64::from(m))
    }

    /// Reset both banks of each selected synapse and reprogram its stored
    /// difference onto one side. Returns the number of SET pulses used.
    pub fn refresh(&mut self, mask: &SynapseMask) -> Result<u64> {
        let mut touched = vec![false; self.shape.devices()];
        self.refresh_masked(mask, &mut touched)
    }

    fn refresh_masked(&mut self, mask: &SynapseMask, touched: &mut [bool]) -> Result<u64> {
        if mask.dims() != (self.shape.rows, self.shape.cols) {
            return Err(Error::config("refresh mask shape does not match crossbar"));
        }
        let mut pulses = 0;
        for (r, c) in mask.iter_selected() {
            pulses += self.refresh_one(r, c, touched)?;
            self.refresh_count += 1;
        }
        Ok(pulses)
    }

    /// Execute a plan: clears, then refreshes, then the planned SET pulses, all
    /// at the current clock.
    pub fn apply_plan(&mut self, plan: &PulsePlan) -> Result<ApplyStats> {
        self.check_shape(plan.shape)?;
        if plan.pre_reset.dims() != (self.shape.rows, self.shape.cols)
            || plan.pre_clear.dims() != (self.shape.rows, self.shape.cols)
        {
            return Err(Error::config("plan masks do not match crossbar"));
        }
        let mut stats = ApplyStats::default();
        let mut touched = vec![false; self.shape.devices()];

        for (r, c) in plan.pre_clear.iter_selected() {
            self.clear_synapse(r, c);
            self.refresh_count += 1;
            stats.refreshed += 1;
        }
        let refresh_only = SynapseMask {
            rows: self.shape.rows,
            cols: self.shape.cols,
            bits: plan
                .pre_reset
                .bits
                .iter()
                .zip(&plan.pre_clear.bits)
                .map(|(&reset, &clear)| reset && !clear)
                .collect(),
        };
        stats.refreshed += refresh_only.count() as u64;
        stats.pulses += self.refresh_masked(&refresh_only, &mut touched)?;

        for (idx, &m) in plan.pulses.iter().enumerate() {
            if m > 0 {
                self.pulse_device(idx, m)?;
                touched[idx] = true;
                stats.pulses += u64::from(m);
            }
        }
        let n = self.shape.n;
        for (ptr, adv) in self.queue_ptr.iter_mut().zip(&plan.queue_advance) {
            *ptr = (*ptr + adv) % n;
        }
        stats.programmed_devices = touched.iter().filter(|&&t| t).count() as u64;
        Ok(stats)
    }

    /// Program signed weights onto a freshly reset crossbar:
    /// `round(|W| / beta / g_unit)` pulses on the matching side.
    pub fn program_weights(&mut self, weights: &Array2<f64>, beta: f64) -> Result<ApplyStats> {
        if weights.dim() != (self.shape.rows, self.shape.cols) {
            return Err(Error::config("weight matrix does not match crossbar"));
        }
        let quantum = self.params.pulse_quantum();
        let mut plan = PulsePlan::empty(self.shape);
        for ((r, c), &w) in weights.indexed_iter() {
            if !w.is_finite() {
                return Err(Error::Numerical(format!("initial weight at ({r}, {c})")));
            }
            let m = ((w.abs() / beta) / quantum).round() as u32;
            if m > 0 {
                self.queue_pulses(&mut plan, r, c, Polarity::for_change(w), m);
            }
        }
        self.apply_plan(&plan)
    }

    /// CSV snapshot, one row per device.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "polarity,k,row,col,g,p_mem,t_p,count,nu")?;
        for (idx, d) in self.devices.iter().enumerate() {
            let (p, k, r, c) = self.shape.locate(idx);
            writeln!(
                out,
                "{},{k},{r},{c},{},{},{},{},{}",
                p.symbol(),
                d.g,
                d.p_mem,
                d.t_p,
                d.count,
                d.nu
            )?;
        }
        Ok(())
    }
}
