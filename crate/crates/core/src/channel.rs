//! Uplink channel model: probabilistic LoS, Nakagami-m small-scale
//! fading, distance power-law large-scale fading with log-normal
//! shadowing on terrestrial links, and the resulting Shannon rate.
//!
//! The instantaneous gain is the LoS-probability-weighted combination of
//! the LoS and NLoS branch gains; each branch gain is its small-scale
//! power divided by its large-scale loss.

use std::collections::HashMap;

use nalgebra::Vector2;
use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};

use crate::config::ScenarioConfig;
use crate::model::{MdId, MecServer, ServerId, ServerKind};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkKind {
    Terrestrial,
    Aerial,
}

impl From<ServerKind> for LinkKind {
    fn from(kind: ServerKind) -> Self {
        match kind {
            ServerKind::Terrestrial => LinkKind::Terrestrial,
            ServerKind::Aerial => LinkKind::Aerial,
        }
    }
}

/// All channel constants in SI units.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelParams {
    /// Subchannel bandwidths [Hz].
    pub bandwidth_t: f64,
    pub bandwidth_a: f64,
    /// Noise power [W].
    pub noise: f64,
    /// Carrier frequency [Hz].
    pub carrier: f64,
    /// Reference distances [m].
    pub d0_t: f64,
    pub d0_a: f64,
    /// Path-loss exponents.
    pub beta_t_los: f64,
    pub beta_t_nlos: f64,
    pub beta_a: f64,
    /// Aerial NLoS gain attenuation (multiplies the NLoS branch gain).
    pub kappa: f64,
    /// Terrestrial LoS-probability parameters [m].
    pub d1: f64,
    pub d2: f64,
    /// Aerial LoS-probability sigmoid parameters.
    pub p1: f64,
    pub p2: f64,
    /// Nakagami shape parameters.
    pub m_t_los: f64,
    pub m_t_nlos: f64,
    pub m_a_los: f64,
    pub m_a_nlos: f64,
    /// Shadowing standard deviations [dB] (terrestrial links only).
    pub sigma_los_db: f64,
    pub sigma_nlos_db: f64,
    /// Mean small-scale power.
    pub mean_power: f64,
}

impl ChannelParams {
    pub fn from_config(config: &ScenarioConfig) -> Self {
        let ch = &config.channel;
        Self {
            bandwidth_t: ch.bandwidth_mbs_mhz * 1e6,
            bandwidth_a: ch.bandwidth_uav_mhz * 1e6,
            noise: config.noise_w(),
            carrier: ch.carrier_ghz * 1e9,
            d0_t: ch.d0_terrestrial_m,
            d0_a: ch.d0_aerial_m,
            beta_t_los: ch.beta_t_los,
            beta_t_nlos: ch.beta_t_nlos,
            beta_a: ch.beta_a,
            kappa: ch.kappa,
            d1: ch.d1_m,
            d2: ch.d2_m,
            p1: ch.p1,
            p2: ch.p2,
            m_t_los: ch.m_t_los,
            m_t_nlos: ch.m_t_nlos,
            m_a_los: ch.m_a_los,
            m_a_nlos: ch.m_a_nlos,
            sigma_los_db: ch.shadowing_los_db,
            sigma_nlos_db: ch.shadowing_nlos_db,
            mean_power: ch.mean_fading_power,
        }
    }

    pub fn bandwidth(&self, kind: LinkKind) -> f64 {
        match kind {
            LinkKind::Terrestrial => self.bandwidth_t,
            LinkKind::Aerial => self.bandwidth_a,
        }
    }

    pub fn nakagami_shape(&self, kind: LinkKind, los: bool) -> f64 {
        match (kind, los) {
            (LinkKind::Terrestrial, true) => self.m_t_los,
            (LinkKind::Terrestrial, false) => self.m_t_nlos,
            (LinkKind::Aerial, true) => self.m_a_los,
            (LinkKind::Aerial, false) => self.m_a_nlos,
        }
    }

    /// Free-space anchor loss at the reference distance.
    pub fn reference_loss(&self, kind: LinkKind) -> f64 {
        let d0 = match kind {
            LinkKind::Terrestrial => self.d0_t,
            LinkKind::Aerial => self.d0_a,
        };
        let x = 4.0 * std::f64::consts::PI * d0 * self.carrier / SPEED_OF_LIGHT;
        x * x
    }
}

/// LoS probability for a 3-D link distance. Terrestrial links use the
/// distance-fit form; aerial links use the elevation-angle sigmoid with
/// the angle taken from the 3-D distance (always well defined since the
/// 3-D distance is at least the altitude).
pub fn los_probability(
    params: &ChannelParams,
    md_position: Vector2<f64>,
    server: &MecServer,
) -> f64 {
    let d = server.distance_to(md_position);
    if d <= f64::EPSILON {
        return 1.0;
    }
    match server.kind {
        ServerKind::Terrestrial => {
            let decay = (-d / params.d2).exp();
            (params.d1 / d).min(1.0) * (1.0 - decay) + decay
        }
        ServerKind::Aerial => {
            let angle_deg = (server.height / d).min(1.0).asin().to_degrees();
            1.0 / (1.0 + params.p1 * (-params.p2 * (angle_deg - params.p1)).exp())
        }
    }
}

/// Draw a small-scale fading amplitude; the squared amplitude follows a
/// Gamma distribution with shape `m` and mean `mean_power`.
pub fn sample_small_scale(
    params: &ChannelParams,
    kind: LinkKind,
    los: bool,
    rng: &mut impl Rng,
) -> f64 {
    sample_small_scale_power(params, kind, los, rng).sqrt()
}

/// Squared small-scale amplitude.
pub fn sample_small_scale_power(
    params: &ChannelParams,
    kind: LinkKind,
    los: bool,
    rng: &mut impl Rng,
) -> f64 {
    let m = params.nakagami_shape(kind, los);
    debug_assert!(m >= 0.5);
    let gamma = Gamma::new(m, params.mean_power / m).expect("gamma params");
    gamma.sample(rng)
}

/// Large-scale loss with an explicit shadowing draw [dB]; aerial links
/// carry no shadowing term and ignore the argument. Distances below the
/// reference distance are clamped to it.
pub fn large_scale_loss_with_shadowing(
    params: &ChannelParams,
    kind: LinkKind,
    distance: f64,
    los: bool,
    shadow_db: f64,
) -> f64 {
    let anchor = params.reference_loss(kind);
    match kind {
        LinkKind::Terrestrial => {
            let d = distance.max(params.d0_t);
            let beta = if los { params.beta_t_los } else { params.beta_t_nlos };
            anchor * (d / params.d0_t).powf(beta) * 10f64.powf(shadow_db / 10.0)
        }
        LinkKind::Aerial => {
            let d = distance.max(params.d0_a);
            let base = anchor * (d / params.d0_a).powf(params.beta_a);
            // The NLoS attenuation applies only to the NLoS branch.
            if los {
                base
            } else {
                base / params.kappa
            }
        }
    }
}

/// Large-scale loss with the shadowing drawn from the configured
/// log-normal (terrestrial links).
pub fn large_scale_loss(
    params: &ChannelParams,
    kind: LinkKind,
    distance: f64,
    los: bool,
    rng: &mut impl Rng,
) -> f64 {
    let shadow_db = match kind {
        LinkKind::Terrestrial => {
            let sigma = if los { params.sigma_los_db } else { params.sigma_nlos_db };
            Normal::new(0.0, sigma).expect("shadowing sigma").sample(rng)
        }
        LinkKind::Aerial => 0.0,
    };
    large_scale_loss_with_shadowing(params, kind, distance, los, shadow_db)
}

/// LoS-probability-weighted combination of the branch gains.
pub fn compose_gain(p_los: f64, gain_los: f64, gain_nlos: f64) -> f64 {
    p_los * gain_los + (1.0 - p_los) * gain_nlos
}

/// Draw both branch gains for one link. Returns `(p_los, g_los, g_nlos)`.
pub fn channel_gain_components(
    params: &ChannelParams,
    md_position: Vector2<f64>,
    server: &MecServer,
    rng: &mut impl Rng,
) -> (f64, f64, f64) {
    let kind = LinkKind::from(server.kind);
    let d = server.distance_to(md_position);
    let p = los_probability(params, md_position, server);
    let power_los = sample_small_scale_power(params, kind, true, rng);
    let power_nlos = sample_small_scale_power(params, kind, false, rng);
    let loss_los = large_scale_loss(params, kind, d, true, rng);
    let loss_nlos = large_scale_loss(params, kind, d, false, rng);
    (p, power_los / loss_los, power_nlos / loss_nlos)
}

/// Instantaneous channel power gain for one link.
pub fn channel_gain(
    params: &ChannelParams,
    md_position: Vector2<f64>,
    server: &MecServer,
    rng: &mut impl Rng,
) -> f64 {
    let (p, g_los, g_nlos) = channel_gain_components(params, md_position, server, rng);
    compose_gain(p, g_los, g_nlos)
}

/// Shannon uplink rate [bit/s].
pub fn uplink_rate(params: &ChannelParams, kind: LinkKind, tx_power: f64, gain: f64) -> f64 {
    params.bandwidth(kind) * (1.0 + tx_power * gain / params.noise).log2()
}

/// Per-slot fading cache. Every (MD, server) pair draws its gain once per
/// slot; preference construction and execution then see the same channel.
#[derive(Debug, Default)]
pub struct FadingCache {
    gains: HashMap<(MdId, ServerId), f64>,
}

impl FadingCache {
    pub fn clear(&mut self) {
        self.gains.clear();
    }

    pub fn gain(
        &mut self,
        params: &ChannelParams,
        md_position: Vector2<f64>,
        md: MdId,
        server: &MecServer,
        rng: &mut impl Rng,
    ) -> f64 {
        *self
            .gains
            .entry((md, server.id))
            .or_insert_with(|| channel_gain(params, md_position, server, rng))
    }

    pub fn rate(
        &mut self,
        params: &ChannelParams,
        md_position: Vector2<f64>,
        md: MdId,
        tx_power: f64,
        server: &MecServer,
        rng: &mut impl Rng,
    ) -> f64 {
        let gain = self.gain(params, md_position, md, server, rng);
        uplink_rate(params, server.kind.into(), tx_power, gain)
    }
}
