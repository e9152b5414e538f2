//! Shared-trunk policy/value network: 3-D conv → tanh → dense layers, with a
//! policy head (one logit per action index) and a scalar value head.

use rand::Rng;

use crate::nn::{Activations, Layer, Sequential};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetConfig {
    pub conv_filters: usize,
    pub hidden: Vec<usize>,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            conv_filters: 8,
            hidden: vec![128, 128],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("network expects input length {expected}, got {got}")]
pub struct DimensionMismatch {
    pub expected: usize,
    pub got: usize,
}

/// Parameters: `theta` = trunk then policy head, `theta_v` = value head,
/// `theta_target` = a lagged copy of `theta ++ theta_v`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyValueNet {
    pub channels: usize,
    pub dims: [usize; 3],
    pub n_actions: usize,
    pub config: NetConfig,
    trunk: Sequential,
    policy_head: Sequential,
    value_head: Sequential,
    pub theta: Vec<f64>,
    pub theta_v: Vec<f64>,
    pub theta_target: Vec<f64>,
}

/// Forward-pass results plus what the backward pass needs.
#[derive(Clone, Debug)]
pub struct NetOutput {
    pub logits: Vec<f64>,
    pub value: f64,
    trunk: Activations,
    policy: Activations,
    value_acts: Activations,
}

impl PolicyValueNet {
    /// A zero-parameter network; see [`PolicyValueNet::init`].
    pub fn zeros(channels: usize, dims: [usize; 3], n_actions: usize, config: NetConfig) -> PolicyValueNet {
        let vol: usize = dims.iter().product();
        let mut layers = vec![
            Layer::Conv3d {
                in_channels: channels,
                out_channels: config.conv_filters,
                dims,
            },
            Layer::Tanh,
        ];
        let mut width = config.conv_filters * vol;
        for &h in &config.hidden {
            layers.push(Layer::Dense {
                inputs: width,
                outputs: h,
            });
            layers.push(Layer::Tanh);
            width = h;
        }
        let trunk = Sequential::new(channels * vol, layers);
        let policy_head = Sequential::new(
            width,
            vec![Layer::Dense {
                inputs: width,
                outputs: n_actions,
            }],
        );
        let value_head = Sequential::new(
            width,
            vec![Layer::Dense {
                inputs: width,
                outputs: 1,
            }],
        );
        let theta = vec![0.0; trunk.param_count() + policy_head.param_count()];
        let theta_v = vec![0.0; value_head.param_count()];
        let theta_target = vec![0.0; theta.len() + theta_v.len()];
        PolicyValueNet {
            channels,
            dims,
            n_actions,
            config,
            trunk,
            policy_head,
            value_head,
            theta,
            theta_v,
            theta_target,
        }
    }

    /// Glorot-initialized network. The policy head starts small so the
    /// initial masked policy is close to uniform.
    pub fn init<R: Rng + ?Sized>(
        channels: usize,
        dims: [usize; 3],
        n_actions: usize,
        config: NetConfig,
        rng: &mut R,
    ) -> PolicyValueNet {
        let mut net = PolicyValueNet::zeros(channels, dims, n_actions, config);
        let mut theta = net.trunk.init_params(rng, 1.0);
        theta.extend(net.policy_head.init_params(rng, 0.1));
        net.theta = theta;
        net.theta_v = net.value_head.init_params(rng, 0.1);
        net.hard_sync_target();
        net
    }

    pub fn input_len(&self) -> usize {
        self.trunk.input_len()
    }

    fn trunk_len(&self) -> usize {
        self.trunk.param_count()
    }

    pub fn forward(&self, input: &[f64]) -> Result<NetOutput, DimensionMismatch> {
        self.forward_with(&self.theta, &self.theta_v, input)
    }

    pub fn forward_with(&self, theta: &[f64], theta_v: &[f64], input: &[f64]) -> Result<NetOutput, DimensionMismatch> {
        if input.len() != self.input_len() {
            return Err(DimensionMismatch {
                expected: self.input_len(),
                got: input.len(),
            });
        }
        let (tp, pp) = theta.split_at(self.trunk_len());
        let trunk = self.trunk.forward(tp, input);
        let policy = self.policy_head.forward(pp, trunk.output());
        let value_acts = self.value_head.forward(theta_v, trunk.output());
        Ok(NetOutput {
            logits: policy.output().to_vec(),
            value: value_acts.output()[0],
            trunk,
            policy,
            value_acts,
        })
    }

    /// Value estimate from the lagged target parameters.
    pub fn target_value(&self, input: &[f64]) -> Result<f64, DimensionMismatch> {
        let (t, v) = self.theta_target.split_at(self.theta.len());
        Ok(self.forward_with(t, v, input)?.value)
    }

    /// Adds `∂L/∂θ` and `∂L/∂θ_v` given the loss gradients at the outputs.
    pub fn backward(
        &self,
        out: &NetOutput,
        d_logits: &[f64],
        d_value: f64,
        grad_theta: &mut [f64],
        grad_theta_v: &mut [f64],
    ) {
        let split = self.trunk_len();
        let (tp, pp) = self.theta.split_at(split);
        let (gt, gp) = grad_theta.split_at_mut(split);
        let mut d_feat = self.policy_head.backward(pp, &out.policy, d_logits, gp);
        let d_feat_v = self
            .value_head
            .backward(&self.theta_v, &out.value_acts, &[d_value], grad_theta_v);
        for (a, b) in d_feat.iter_mut().zip(&d_feat_v) {
            *a += b;
        }
        self.trunk.backward_params(tp, &out.trunk, &d_feat, gt);
    }

    /// `θ⁻ ← τ·[θ; θ_v] + (1 − τ)·θ⁻`.
    pub fn soft_sync_target(&mut self, tau: f64) {
        let fresh = self.theta.iter().chain(&self.theta_v);
        for (t, &v) in self.theta_target.iter_mut().zip(fresh) {
            *t = tau * v + (1.0 - tau) * *t;
        }
    }

    pub fn hard_sync_target(&mut self) {
        self.theta_target.clear();
        self.theta_target.extend_from_slice(&self.theta);
        self.theta_target.extend_from_slice(&self.theta_v);
    }

    /// Layer widths recorded in checkpoints: `[channels, x, y, z, filters,
    /// hidden..., n_actions]`.
    pub fn shape(&self) -> Vec<u32> {
        let mut s = vec![self.channels as u32];
        s.extend(self.dims.iter().map(|&d| d as u32));
        s.push(self.config.conv_filters as u32);
        s.extend(self.config.hidden.iter().map(|&h| h as u32));
        s.push(self.n_actions as u32);
        s
    }

    /// Rebuilds an empty network from [`PolicyValueNet::shape`].
    pub fn from_shape(shape: &[u32]) -> Option<PolicyValueNet> {
        if shape.len() < 6 {
            return None;
        }
        let u = |i: usize| shape[i] as usize;
        let hidden = shape[5..shape.len() - 1].iter().map(|&h| h as usize).collect();
        Some(PolicyValueNet::zeros(
            u(0),
            [u(1), u(2), u(3)],
            u(shape.len() - 1),
            NetConfig {
                conv_filters: u(4),
                hidden,
            },
        ))
    }
}
