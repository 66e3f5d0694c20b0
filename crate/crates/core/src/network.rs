//! Genome encoding and the two per-robot networks.
//!
//! The action network is feedforward: `R` sensors plus the previous action
//! value go through one `tanh` hidden layer to two logistic outputs (move or
//! rotate, turn direction). The prediction network receives the sensors plus
//! the action just chosen; its `tanh` hidden units each carry a self-loop,
//! and its logistic outputs are thresholded into predicted sensor bits for
//! the next time step. Every hidden and output unit has a bias.
//!
//! Weight layout, action network:
//! `[input->hidden (hidden rows x inputs) | hidden bias | hidden->output (outputs rows x hidden) | output bias]`.
//!
//! Weight layout, prediction network:
//! `[input->hidden | hidden bias | self-loop per hidden unit | hidden->output | output bias]`.

use std::fmt::Write as _;

use rand::Rng;

use crate::error::{parse_err, Error, Result};
use crate::grid::{Action, SensorModel, SensorReading, Turn};
use crate::scalar::Scalar;

/// Hidden units of the action network.
pub const ACTION_HIDDEN: usize = 8;
/// Outputs of the action network: action value and turn direction.
pub const ACTION_OUTPUTS: usize = 2;

pub(crate) fn logistic<S: Scalar>(z: S) -> S {
    S::one() / (S::one() + (-z).exp())
}

/// Hyperbolic tangent through a single `exp`, about twice as fast as the
/// library `tanh` and within a few units of the last place of it.
#[inline]
pub(crate) fn tanh<S: Scalar>(x: S) -> S {
    // beyond 20 the result rounds to +-1 in both precisions
    let limit = S::from_unit(20.0);
    let x = x.max(-limit).min(limit);
    let e = (x + x).exp();
    (e - S::one()) / (e + S::one())
}

/// Whether a unit with pre-activation `z` fires, i.e. `logistic(z) >= 0.5`.
///
/// Equivalent to evaluating the logistic and comparing, including the
/// rounding cases just below zero where the logistic rounds up to 0.5.
#[inline]
pub(crate) fn fires<S: Scalar>(z: S) -> bool {
    if z >= S::zero() {
        return true;
    }
    z > S::from_unit(-1e-3) && logistic(z) >= S::from_unit(0.5)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActionTopology {
    pub inputs: usize,
    pub hidden: usize,
    pub outputs: usize,
}

impl ActionTopology {
    pub fn for_model(model: SensorModel) -> ActionTopology {
        ActionTopology {
            inputs: model.len() + 1,
            hidden: ACTION_HIDDEN,
            outputs: ACTION_OUTPUTS,
        }
    }

    pub fn weight_count(&self) -> usize {
        self.inputs * self.hidden + self.hidden + self.hidden * self.outputs + self.outputs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PredictionTopology {
    pub inputs: usize,
    pub hidden: usize,
    pub outputs: usize,
}

impl PredictionTopology {
    /// `None` when every prediction is predefined and no network exists.
    ///
    /// Without predefined sensors the hidden layer has one unit per sensor;
    /// with some predefined it has two more units than free outputs (12 hidden
    /// for 10 free outputs under model C).
    pub fn for_model(model: SensorModel, mask: &PredefinedPredictions) -> Option<PredictionTopology> {
        let free = mask.free_count();
        if free == 0 {
            return None;
        }
        let hidden = if free == model.len() { free } else { free + 2 };
        Some(PredictionTopology {
            inputs: model.len() + 1,
            hidden,
            outputs: free,
        })
    }

    pub fn weight_count(&self) -> usize {
        self.inputs * self.hidden + 2 * self.hidden + self.hidden * self.outputs + self.outputs
    }
}

/// Which predictions are pinned to constants instead of coming from the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MaskKind {
    None,
    /// Sensors ahead of and behind the robot fixed to 1.
    Partial,
    /// Sensors ahead of and behind the robot fixed to 1, all others to 0.
    Full,
}

impl MaskKind {
    pub fn build(self, model: SensorModel) -> PredefinedPredictions {
        match self {
            MaskKind::None => PredefinedPredictions::none(model.len()),
            MaskKind::Partial => PredefinedPredictions::line_partial(model),
            MaskKind::Full => PredefinedPredictions::line_full(model),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MaskKind::None => "none",
            MaskKind::Partial => "partial",
            MaskKind::Full => "full",
        }
    }

    pub fn parse(name: &str) -> Option<MaskKind> {
        match name.trim() {
            "none" => Some(MaskKind::None),
            "partial" => Some(MaskKind::Partial),
            "full" => Some(MaskKind::Full),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PredefinedPredictions {
    fixed: Vec<Option<bool>>,
}

impl PredefinedPredictions {
    pub fn none(sensors: usize) -> PredefinedPredictions {
        PredefinedPredictions {
            fixed: vec![None; sensors],
        }
    }

    pub fn from_fixed(fixed: Vec<Option<bool>>) -> PredefinedPredictions {
        PredefinedPredictions { fixed }
    }

    pub fn line_partial(model: SensorModel) -> PredefinedPredictions {
        let mut mask = Self::none(model.len());
        for r in model.axial_sensors() {
            mask.fixed[r] = Some(true);
        }
        mask
    }

    pub fn line_full(model: SensorModel) -> PredefinedPredictions {
        let mut mask = PredefinedPredictions {
            fixed: vec![Some(false); model.len()],
        };
        for r in model.axial_sensors() {
            mask.fixed[r] = Some(true);
        }
        mask
    }

    pub fn len(&self) -> usize {
        self.fixed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fixed.is_empty()
    }

    pub fn get(&self, sensor: usize) -> Option<bool> {
        self.fixed[sensor]
    }

    pub fn free_count(&self) -> usize {
        self.fixed.iter().filter(|f| f.is_none()).count()
    }

    pub fn is_fully_fixed(&self) -> bool {
        self.free_count() == 0
    }

    /// Sensor indices predicted by the network, in output order.
    pub fn free_sensors(&self) -> impl Iterator<Item = usize> + '_ {
        self.fixed
            .iter()
            .enumerate()
            .filter(|(_, f)| f.is_none())
            .map(|(i, _)| i)
    }

    /// `(fixed positions, fixed values)` as bit sets.
    pub fn bits(&self) -> (u32, u32) {
        self.fixed
            .iter()
            .enumerate()
            .fold((0, 0), |(m, v), (i, f)| match f {
                Some(b) => (m | 1 << i, v | u32::from(*b) << i),
                None => (m, v),
            })
    }

    /// One character per sensor: `-` free, `0`/`1` fixed.
    pub fn to_code(&self) -> String {
        self.fixed
            .iter()
            .map(|f| match f {
                None => '-',
                Some(false) => '0',
                Some(true) => '1',
            })
            .collect()
    }

    pub fn from_code(code: &str) -> Option<PredefinedPredictions> {
        code.chars()
            .map(|c| match c {
                '-' => Some(None),
                '0' => Some(Some(false)),
                '1' => Some(Some(true)),
                _ => None,
            })
            .collect::<Option<Vec<_>>>()
            .map(PredefinedPredictions::from_fixed)
    }
}

fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch {
            what,
            expected,
            found,
        });
    }
    Ok(())
}

/// Borrowed view of action-network weights.
#[derive(Debug, Clone, Copy)]
pub struct ActionNet<'a, S> {
    topology: ActionTopology,
    weights: &'a [S],
}

impl<'a, S: Scalar> ActionNet<'a, S> {
    pub fn new(topology: ActionTopology, weights: &'a [S]) -> Result<Self> {
        check_len("action weights", topology.weight_count(), weights.len())?;
        Ok(ActionNet { topology, weights })
    }

    /// Logistic outputs `[action value, turn direction]`.
    pub fn outputs(&self, sensors: SensorReading, last_action: bool) -> Result<Vec<S>> {
        let t = self.topology;
        check_len("action inputs", t.inputs, sensors.len() + 1)?;
        let input = |i: usize| -> S {
            let on = if i < sensors.len() {
                sensors.get(i)
            } else {
                last_action
            };
            if on {
                S::one()
            } else {
                S::zero()
            }
        };
        let (w_ih, rest) = self.weights.split_at(t.inputs * t.hidden);
        let (b_h, rest) = rest.split_at(t.hidden);
        let (w_ho, b_o) = rest.split_at(t.hidden * t.outputs);
        let hidden: Vec<S> = (0..t.hidden)
            .map(|j| {
                let row = &w_ih[j * t.inputs..(j + 1) * t.inputs];
                let z = row
                    .iter()
                    .enumerate()
                    .fold(b_h[j], |acc, (i, &w)| acc + w * input(i));
                tanh(z)
            })
            .collect();
        Ok((0..t.outputs)
            .map(|k| {
                let row = &w_ho[k * t.hidden..(k + 1) * t.hidden];
                let z = row
                    .iter()
                    .zip(&hidden)
                    .fold(b_o[k], |acc, (&w, &h)| acc + w * h);
                logistic(z)
            })
            .collect())
    }

    pub fn forward(&self, sensors: SensorReading, last_action: bool) -> Result<Action> {
        let out = self.outputs(sensors, last_action)?;
        let half = S::from_unit(0.5);
        Ok(Action {
            move_forward: out[0] >= half,
            turn: if out[1] >= half { Turn::Right } else { Turn::Left },
        })
    }
}

/// Borrowed view of prediction-network weights plus the predefined mask.
#[derive(Debug, Clone, Copy)]
pub struct PredictionNet<'a, S> {
    topology: Option<PredictionTopology>,
    weights: &'a [S],
    mask: &'a PredefinedPredictions,
}

impl<'a, S: Scalar> PredictionNet<'a, S> {
    pub fn new(
        topology: Option<PredictionTopology>,
        weights: &'a [S],
        mask: &'a PredefinedPredictions,
    ) -> Result<Self> {
        let expected = topology.map_or(0, |t| t.weight_count());
        check_len("prediction weights", expected, weights.len())?;
        if let Some(t) = topology {
            check_len("prediction outputs", mask.free_count(), t.outputs)?;
        }
        Ok(PredictionNet {
            topology,
            weights,
            mask,
        })
    }

    pub fn hidden_len(&self) -> usize {
        self.topology.map_or(0, |t| t.hidden)
    }

    /// Predicted sensor bits for the next time step. `state` holds the hidden
    /// activations of the previous step and is overwritten with the new ones.
    pub fn forward(
        &self,
        state: &mut [S],
        sensors: SensorReading,
        next_action: bool,
    ) -> Result<SensorReading> {
        check_len("prediction sensors", self.mask.len(), sensors.len())?;
        check_len("hidden state", self.hidden_len(), state.len())?;
        let (fixed_at, fixed_val) = self.mask.bits();
        let Some(t) = self.topology else {
            return Ok(SensorReading::new(fixed_val, sensors.len()));
        };
        let input = |i: usize| -> S {
            let on = if i < sensors.len() {
                sensors.get(i)
            } else {
                next_action
            };
            if on {
                S::one()
            } else {
                S::zero()
            }
        };
        let (w_ih, rest) = self.weights.split_at(t.inputs * t.hidden);
        let (b_h, rest) = rest.split_at(t.hidden);
        let (w_self, rest) = rest.split_at(t.hidden);
        let (w_ho, b_o) = rest.split_at(t.hidden * t.outputs);
        for j in 0..t.hidden {
            let row = &w_ih[j * t.inputs..(j + 1) * t.inputs];
            let z = row
                .iter()
                .enumerate()
                .fold(b_h[j], |acc, (i, &w)| acc + w * input(i));
            state[j] = tanh(z + w_self[j] * state[j]);
        }
        let half = S::from_unit(0.5);
        let mut bits = fixed_val & fixed_at;
        for (k, sensor) in self.mask.free_sensors().enumerate() {
            let row = &w_ho[k * t.hidden..(k + 1) * t.hidden];
            let z = row
                .iter()
                .zip(state.iter())
                .fold(b_o[k], |acc, (&w, &h)| acc + w * h);
            if logistic(z) >= half {
                bits |= 1 << sensor;
            }
        }
        Ok(SensorReading::new(bits, sensors.len()))
    }
}

/// Both weight vectors of one robot controller plus its predefined predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct GenomeOf<S> {
    model: SensorModel,
    mask: PredefinedPredictions,
    action: Vec<S>,
    prediction: Vec<S>,
}

impl<S: Scalar> GenomeOf<S> {
    pub fn new(
        model: SensorModel,
        mask: PredefinedPredictions,
        action: Vec<S>,
        prediction: Vec<S>,
    ) -> Result<Self> {
        check_len("mask length", model.len(), mask.len())?;
        check_len(
            "action weights",
            ActionTopology::for_model(model).weight_count(),
            action.len(),
        )?;
        let expected = PredictionTopology::for_model(model, &mask).map_or(0, |t| t.weight_count());
        check_len("prediction weights", expected, prediction.len())?;
        if action.iter().chain(&prediction).any(|w| !w.is_finite()) {
            return Err(Error::InvalidConfig("genome contains non-finite weights".into()));
        }
        Ok(GenomeOf {
            model,
            mask,
            action,
            prediction,
        })
    }

    /// Every weight drawn uniformly from `[-1, 1]`.
    pub fn random<R: Rng + ?Sized>(model: SensorModel, mask: PredefinedPredictions, rng: &mut R) -> Self {
        let n_action = ActionTopology::for_model(model).weight_count();
        let n_pred = PredictionTopology::for_model(model, &mask).map_or(0, |t| t.weight_count());
        let mut draw = || S::from_unit(rng.gen_range(-1.0..=1.0));
        let action = (0..n_action).map(|_| draw()).collect();
        let prediction = (0..n_pred).map(|_| draw()).collect();
        GenomeOf {
            model,
            mask,
            action,
            prediction,
        }
    }

    /// Copies the genome, replacing each weight with probability `rate` by a
    /// fresh uniform draw from `[-1, 1]`.
    pub fn mutate<R: Rng + ?Sized>(&self, rate: f64, rng: &mut R) -> Self {
        let mut child = self.clone();
        if rate <= 0.0 {
            return child;
        }
        for w in child.action.iter_mut().chain(child.prediction.iter_mut()) {
            if rng.gen_bool(rate.min(1.0)) {
                *w = S::from_unit(rng.gen_range(-1.0..=1.0));
            }
        }
        child
    }

    pub fn model(&self) -> SensorModel {
        self.model
    }

    pub fn mask(&self) -> &PredefinedPredictions {
        &self.mask
    }

    pub fn action_weights(&self) -> &[S] {
        &self.action
    }

    pub fn prediction_weights(&self) -> &[S] {
        &self.prediction
    }

    pub fn action_topology(&self) -> ActionTopology {
        ActionTopology::for_model(self.model)
    }

    pub fn prediction_topology(&self) -> Option<PredictionTopology> {
        PredictionTopology::for_model(self.model, &self.mask)
    }

    pub fn action_net(&self) -> ActionNet<'_, S> {
        ActionNet {
            topology: self.action_topology(),
            weights: &self.action,
        }
    }

    pub fn prediction_net(&self) -> PredictionNet<'_, S> {
        PredictionNet {
            topology: self.prediction_topology(),
            weights: &self.prediction,
            mask: &self.mask,
        }
    }

    /// Fresh all-zero hidden state for one robot.
    pub fn initial_state(&self) -> Vec<S> {
        vec![S::zero(); self.prediction_topology().map_or(0, |t| t.hidden)]
    }

    pub fn weight_count(&self) -> usize {
        self.action.len() + self.prediction.len()
    }

    /// Serializes into the versioned text format:
    ///
    /// ```text
    /// minsurprise-genome 1
    /// scalar f64
    /// sensor-model C
    /// mask 1--1----1--1--
    /// action 146
    /// <146 lines, one weight each>
    /// prediction 448
    /// <448 lines>
    /// ```
    ///
    /// Weights use the shortest decimal form that parses back to the same value.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "minsurprise-genome 1");
        let _ = writeln!(out, "scalar {}", S::NAME);
        let _ = writeln!(out, "sensor-model {}", self.model);
        let _ = writeln!(out, "mask {}", self.mask.to_code());
        for (name, weights) in [("action", &self.action), ("prediction", &self.prediction)] {
            let _ = writeln!(out, "{name} {}", weights.len());
            for w in weights.iter() {
                let _ = writeln!(out, "{w}");
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (no, version) = header(&mut lines, "minsurprise-genome")?;
        if version != "1" {
            return Err(parse_err(no, format!("unsupported format version {version}")));
        }
        let (no, scalar) = header(&mut lines, "scalar")?;
        if scalar != S::NAME {
            return Err(parse_err(
                no,
                format!("genome stores {scalar} weights, expected {}", S::NAME),
            ));
        }
        let (no, model) = header(&mut lines, "sensor-model")?;
        let model =
            SensorModel::parse(&model).ok_or_else(|| parse_err(no, format!("unknown sensor model {model}")))?;
        let (no, code) = header(&mut lines, "mask")?;
        let mask = PredefinedPredictions::from_code(&code)
            .ok_or_else(|| parse_err(no, format!("bad mask code {code}")))?;
        let action = section(&mut lines, "action")?;
        let prediction = section(&mut lines, "prediction")?;
        GenomeOf::new(model, mask, action, prediction)
    }
}

fn header<'t>(lines: &mut impl Iterator<Item = (usize, &'t str)>, key: &str) -> Result<(usize, String)> {
    let (no, line) = lines
        .next()
        .ok_or_else(|| parse_err(0, format!("missing `{key}` line")))?;
    let value = line
        .strip_prefix(key)
        .and_then(|v| v.strip_prefix(' '))
        .ok_or_else(|| parse_err(no, format!("expected `{key} ...`")))?;
    Ok((no, value.trim().to_string()))
}

fn section<'t, S: Scalar>(lines: &mut impl Iterator<Item = (usize, &'t str)>, key: &str) -> Result<Vec<S>> {
    let (no, count) = header(lines, key)?;
    let count: usize = count
        .parse()
        .map_err(|_| parse_err(no, format!("bad weight count {count}")))?;
    (0..count)
        .map(|_| {
            let (no, line) = lines
                .next()
                .ok_or_else(|| parse_err(no, format!("truncated `{key}` section")))?;
            line.parse::<S>()
                .map_err(|_| parse_err(no, format!("bad weight {line:?}")))
        })
        .collect()
}
