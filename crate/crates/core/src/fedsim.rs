//! Federated averaging with client-side gradient transforms.
//!
//! Each round every client starts from the global parameters, runs a few
//! local SGD steps, turns the parameter delta into its accumulated round
//! gradient and transmits a transformed version of it as a
//! [`StandinMessage`]. The server averages the payloads in client-id order
//! and steps the global model. Moment state lives in [`ClientState`] and is
//! never part of a message.

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::defense::{MomentState, TransformKind};
use crate::error::{Error, Result};
use crate::nn::{self, GradientSet, MlpSpec, Params, Sample};

#[derive(Debug, Clone)]
pub struct ClientState {
    pub id: usize,
    shard: Vec<Sample>,
    moment: MomentState,
    seed: u64,
}

impl ClientState {
    pub fn new(id: usize, shard: Vec<Sample>, like: &Params, seed: u64) -> Result<Self> {
        if shard.is_empty() {
            return Err(Error::EmptyShard(id));
        }
        Ok(Self { id, shard, moment: MomentState::new(like), seed })
    }

    pub fn shard(&self) -> &[Sample] {
        &self.shard
    }

    pub fn moment(&self) -> &MomentState {
        &self.moment
    }
}

/// Splits `samples` into `n_clients` equal contiguous shards after a seeded
/// shuffle. Leftover samples (fewer than `n_clients`) are dropped.
pub fn make_clients(
    mut samples: Vec<Sample>,
    n_clients: usize,
    like: &Params,
    seed: u64,
) -> Result<Vec<ClientState>> {
    if n_clients == 0 {
        return Err(Error::InvalidArgument("need at least one client".into()));
    }
    let per_client = samples.len() / n_clients;
    if per_client == 0 {
        return Err(Error::EmptyShard(0));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    use rand::seq::SliceRandom;
    samples.shuffle(&mut rng);
    samples.truncate(per_client * n_clients);
    let mut clients = Vec::with_capacity(n_clients);
    for (id, chunk) in samples.chunks(per_client).enumerate() {
        let client_seed = seed ^ (0x9E37_79B9_7F4A_7C15u64.wrapping_mul(id as u64 + 1));
        clients.push(ClientState::new(id, chunk.to_vec(), like, client_seed)?);
    }
    Ok(clients)
}

/// Fails unless every client holds the same number of samples.
pub fn check_equal_shards(clients: &[ClientState]) -> Result<()> {
    let Some(first) = clients.first() else {
        return Err(Error::InvalidArgument("no clients".into()));
    };
    let n = first.shard.len();
    if let Some(c) = clients.iter().find(|c| c.shard.len() != n) {
        return Err(Error::UnequalShards(format!(
            "client {} holds {} samples, client {} holds {n}",
            c.id,
            c.shard.len(),
            first.id
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundConfig {
    pub local_iterations: usize,
    pub batch_size: usize,
    pub local_lr: f64,
    pub server_lr: f64,
    pub transform: TransformKind,
}

impl RoundConfig {
    /// Defaults per transform: unit server step for raw payloads, 0.01 for
    /// the magnitude-normalized stand-ins.
    pub fn new(transform: TransformKind) -> Self {
        let server_lr = match transform {
            TransformKind::AdaDefense => 0.01,
            _ => 1.0,
        };
        Self { local_iterations: 1, batch_size: 32, local_lr: 0.1, server_lr, transform }
    }

    pub fn validate(&self) -> Result<()> {
        if self.local_iterations == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument(
                "local iterations and batch size must be >= 1".into(),
            ));
        }
        if !(self.local_lr > 0.0) || !(self.server_lr > 0.0) {
            return Err(Error::InvalidArgument("learning rates must be positive".into()));
        }
        self.transform.validate()
    }
}

/// The single client-to-server payload.
#[derive(Debug, Clone, PartialEq)]
pub struct StandinMessage {
    pub client_id: usize,
    pub sample_count: usize,
    pub payload: GradientSet,
}

impl StandinMessage {
    /// Little-endian wire encoding: client id, sample count, value count,
    /// then the payload values in parameter order. Nothing else is sent.
    pub fn to_bytes(&self) -> Vec<u8> {
        let values = self.payload.flatten();
        let mut out = Vec::with_capacity(24 + 8 * values.len());
        out.write_u64::<LittleEndian>(self.client_id as u64).unwrap();
        out.write_u64::<LittleEndian>(self.sample_count as u64).unwrap();
        out.write_u64::<LittleEndian>(values.len() as u64).unwrap();
        for v in values {
            out.write_f64::<LittleEndian>(v).unwrap();
        }
        out
    }

    /// Decodes a message whose payload has the layout of `like`.
    pub fn from_bytes(bytes: &[u8], like: &Params) -> Result<Self> {
        let mut cur = std::io::Cursor::new(bytes);
        let truncated = |_| Error::Truncated("stand-in message".into());
        let client_id = cur.read_u64::<LittleEndian>().map_err(truncated)? as usize;
        let sample_count = cur.read_u64::<LittleEndian>().map_err(truncated)? as usize;
        let n = cur.read_u64::<LittleEndian>().map_err(truncated)? as usize;
        if n != like.num_params() {
            return Err(Error::ShapeMismatch(format!(
                "message carries {n} values, model has {}",
                like.num_params()
            )));
        }
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            values.push(cur.read_f64::<LittleEndian>().map_err(truncated)?);
        }
        if (cur.position() as usize) != bytes.len() {
            return Err(Error::Format("trailing bytes after stand-in message".into()));
        }
        Ok(Self { client_id, sample_count, payload: like.with_flat(&values)? })
    }
}

/// Raw accumulated round gradient `(ω_start - ω_end) / local_lr` after
/// `cfg.local_iterations` SGD steps on seeded minibatches.
pub fn local_round_gradient(
    client: &ClientState,
    spec: &MlpSpec,
    global: &Params,
    cfg: &RoundConfig,
    round: u64,
) -> Result<GradientSet> {
    cfg.validate()?;
    if client.shard.is_empty() {
        return Err(Error::EmptyShard(client.id));
    }
    if !global.conforms(spec) {
        return Err(Error::ShapeMismatch("global parameters do not match the model spec".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(client.seed.wrapping_add(round.wrapping_mul(0xA24B_AED4_963E_E407)));
    let n = client.shard.len();
    let mut params = global.clone();
    for _ in 0..cfg.local_iterations {
        let (_, g) = if cfg.batch_size >= n {
            nn::batch_loss_and_grad(spec, &params, &client.shard)?
        } else {
            let mut picks = index::sample(&mut rng, n, cfg.batch_size).into_vec();
            picks.sort_unstable();
            let batch: Vec<Sample> = picks.iter().map(|&i| client.shard[i].clone()).collect();
            nn::batch_loss_and_grad(spec, &params, &batch)?
        };
        params = nn::sgd_step(&params, &g, cfg.local_lr)?;
    }
    global.zip_map(&params, |start, end| (start - end) / cfg.local_lr)
}

/// One client round: local training, then the configured transform.
pub fn local_round(
    client: &mut ClientState,
    spec: &MlpSpec,
    global: &Params,
    cfg: &RoundConfig,
    round: u64,
) -> Result<StandinMessage> {
    let g = local_round_gradient(client, spec, global, cfg, round)?;
    let noise_seed = client.seed ^ round.wrapping_mul(0xD1B5_4A32_D192_ED03);
    let payload = cfg.transform.apply(&g, &mut client.moment, noise_seed)?;
    Ok(StandinMessage { client_id: client.id, sample_count: client.shard.len(), payload })
}

/// Unweighted mean of the payloads, summed in ascending client-id order.
pub fn aggregate(messages: &[StandinMessage]) -> Result<GradientSet> {
    let mut ordered: Vec<&StandinMessage> = messages.iter().collect();
    ordered.sort_by_key(|m| m.client_id);
    let first = *ordered.first().ok_or(Error::NoMessages)?;
    let mut sum = vec![0.0; first.payload.num_params()];
    for m in &ordered {
        if m.sample_count != first.sample_count {
            return Err(Error::UnequalShards(format!(
                "client {} reports {} samples, client {} reports {}",
                m.client_id, m.sample_count, first.client_id, first.sample_count
            )));
        }
        first.payload.check_congruent(&m.payload)?;
        for (acc, v) in sum.iter_mut().zip(m.payload.iter()) {
            *acc += v;
        }
    }
    let n = ordered.len() as f64;
    let mean: Vec<f64> = sum.into_iter().map(|v| v / n).collect();
    first.payload.with_flat(&mean)
}

/// `ω ← ω - server_lr · agg`
pub fn apply_global_update(global: &Params, agg: &GradientSet, server_lr: f64) -> Result<Params> {
    nn::sgd_step(global, agg, server_lr)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub round: u64,
    pub train_loss: f64,
    pub test_accuracy: f64,
    /// Mean L2 norm of the client payloads.
    pub payload_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunHistory {
    pub records: Vec<RoundRecord>,
    pub final_params: Params,
}

/// Runs `rounds` rounds of local training and aggregation with every client
/// participating. Clients train in parallel; results are bit-reproducible
/// because aggregation order is fixed by client id.
pub fn run_federation(
    clients: &mut [ClientState],
    spec: &MlpSpec,
    init: Params,
    cfg: &RoundConfig,
    rounds: u64,
    test_set: &[Sample],
) -> Result<RunHistory> {
    if rounds == 0 {
        return Err(Error::InvalidArgument("rounds must be >= 1".into()));
    }
    cfg.validate()?;
    check_equal_shards(clients)?;
    let mut global = init;
    let mut records = Vec::with_capacity(rounds as usize);
    for round in 1..=rounds {
        let messages = clients
            .par_iter_mut()
            .map(|c| local_round(c, spec, &global, cfg, round))
            .collect::<Result<Vec<_>>>()?;
        let agg = aggregate(&messages)?;
        global = apply_global_update(&global, &agg, cfg.server_lr)?;
        if !global.is_finite() {
            return Err(Error::NonFinite(format!("global parameters diverged in round {round}")));
        }
        let mut train_loss = 0.0;
        let mut n = 0usize;
        for c in clients.iter() {
            train_loss += nn::mean_loss(spec, &global, &c.shard)? * c.shard.len() as f64;
            n += c.shard.len();
        }
        let payload_norm =
            messages.iter().map(|m| m.payload.l2_norm()).sum::<f64>() / messages.len() as f64;
        records.push(RoundRecord {
            round,
            train_loss: train_loss / n as f64,
            test_accuracy: nn::accuracy(spec, &global, test_set)?,
            payload_norm,
        });
    }
    Ok(RunHistory { records, final_params: global })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_params, Activation};
    use crate::tensor::Tensor;
    use rand::seq::SliceRandom;
    use rand::Rng;

    fn toy_data(n: usize, seed: u64) -> Vec<Sample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let label = i % 3;
                let mut x: Vec<f64> = (0..4).map(|_| rng.random_range(-0.3..0.3)).collect();
                x[label] += 1.0;
                Sample { x: Tensor::vector(x).unwrap(), label }
            })
            .collect()
    }

    fn spec() -> MlpSpec {
        MlpSpec::new(vec![4, 5, 3], Activation::Tanh).unwrap()
    }

    fn identity_cfg() -> RoundConfig {
        RoundConfig { batch_size: 1000, ..RoundConfig::new(TransformKind::Identity) }
    }

    #[test]
    fn one_full_batch_iteration_reproduces_mean_gradient() {
        let spec = spec();
        let params = init_params(&spec, 1);
        let mut client = ClientState::new(0, toy_data(12, 1), &params, 5).unwrap();
        let msg = local_round(&mut client, &spec, &params, &identity_cfg(), 1).unwrap();
        let (_, g) = nn::batch_loss_and_grad(&spec, &params, client.shard()).unwrap();
        for (a, b) in msg.payload.iter().zip(g.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(msg.sample_count, 12);
    }

    #[test]
    fn one_iteration_gradient_is_independent_of_local_lr() {
        let spec = spec();
        let params = init_params(&spec, 2);
        let client = ClientState::new(0, toy_data(9, 2), &params, 5).unwrap();
        let a = local_round_gradient(&client, &spec, &params, &identity_cfg(), 1).unwrap();
        let cfg = RoundConfig { local_lr: 0.003, ..identity_cfg() };
        let b = local_round_gradient(&client, &spec, &params, &cfg, 1).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() < 1e-9 * x.abs().max(1.0));
        }
    }

    #[test]
    fn fresh_standin_payload_is_bounded() {
        let spec = spec();
        let params = init_params(&spec, 3);
        let mut client = ClientState::new(0, toy_data(8, 3), &params, 5).unwrap();
        let cfg = RoundConfig { local_iterations: 3, batch_size: 4, ..RoundConfig::new(TransformKind::AdaDefense) };
        let msg = local_round(&mut client, &spec, &params, &cfg, 1).unwrap();
        assert!(msg.payload.iter().all(|v| v.abs() < 1.0));
        assert_eq!(client.moment().round(), 1);
    }

    #[test]
    fn empty_shard_is_rejected() {
        let params = Params::zeros(&spec());
        assert!(matches!(ClientState::new(3, vec![], &params, 0), Err(Error::EmptyShard(3))));
    }

    fn message(id: usize, count: usize, values: &[f64]) -> StandinMessage {
        let like = Params::zeros(&MlpSpec::new(vec![2, 1], Activation::Tanh).unwrap());
        StandinMessage { client_id: id, sample_count: count, payload: like.with_flat(values).unwrap() }
    }

    #[test]
    fn aggregation_basics() {
        let p = message(0, 5, &[1.0, -2.0, 0.5]);
        assert_eq!(aggregate(std::slice::from_ref(&p)).unwrap(), p.payload);
        let neg = message(1, 5, &[-1.0, 2.0, -0.5]);
        assert!(aggregate(&[p.clone(), neg]).unwrap().iter().all(|&v| v == 0.0));
        assert!(matches!(aggregate(&[]), Err(Error::NoMessages)));
        let uneven = message(1, 4, &[0.0, 0.0, 0.0]);
        assert!(matches!(aggregate(&[p.clone(), uneven]), Err(Error::UnequalShards(_))));
        let same = vec![p.clone(), message(1, 5, &[1.0, -2.0, 0.5]), message(2, 5, &[1.0, -2.0, 0.5])];
        assert_eq!(aggregate(&same).unwrap(), p.payload);
    }

    #[test]
    fn aggregation_is_order_invariant_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut msgs: Vec<StandinMessage> = (0..7)
            .map(|id| {
                let vals: Vec<f64> = (0..3).map(|_| rng.random_range(-1e3..1e3)).collect();
                message(id, 10, &vals)
            })
            .collect();
        let reference = aggregate(&msgs).unwrap();
        for _ in 0..50 {
            msgs.shuffle(&mut rng);
            assert_eq!(aggregate(&msgs).unwrap(), reference);
        }
    }

    #[test]
    fn global_update_arithmetic() {
        let g = message(0, 1, &[1.0, 2.0, 3.0]).payload;
        let ones = g.map(|_| 1.0);
        assert_eq!(apply_global_update(&g, &ones, 0.0).unwrap(), g);
        let stepped = apply_global_update(&g, &ones, 0.1).unwrap();
        for (a, b) in stepped.iter().zip(g.iter()) {
            assert!((a - (b - 0.1)).abs() < 1e-15);
        }
    }

    #[test]
    fn single_client_matches_centralized_sgd() {
        let spec = spec();
        let init = init_params(&spec, 4);
        let data = toy_data(15, 4);
        let mut clients = vec![ClientState::new(0, data.clone(), &init, 1).unwrap()];
        let cfg = RoundConfig { server_lr: 0.1, ..identity_cfg() };
        let mut central = init.clone();
        let mut global = init;
        for round in 1..=10 {
            let msg = local_round(&mut clients[0], &spec, &global, &cfg, round).unwrap();
            global = apply_global_update(&global, &aggregate(&[msg]).unwrap(), cfg.server_lr).unwrap();
            let (_, g) = nn::batch_loss_and_grad(&spec, &central, &data).unwrap();
            central = nn::sgd_step(&central, &g, cfg.local_lr).unwrap();
            let diff = global.iter().zip(central.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(diff <= 1e-12, "round {round}: {diff:e}");
        }
    }

    #[test]
    fn unequal_shards_fail_fast() {
        let spec = spec();
        let params = Params::zeros(&spec);
        let mut clients = vec![
            ClientState::new(0, toy_data(4, 1), &params, 0).unwrap(),
            ClientState::new(1, toy_data(5, 2), &params, 1).unwrap(),
        ];
        assert!(matches!(
            run_federation(&mut clients, &spec, params, &identity_cfg(), 1, &[]),
            Err(Error::UnequalShards(_))
        ));
    }

    #[test]
    fn make_clients_gives_equal_shards() {
        let params = Params::zeros(&spec());
        let clients = make_clients(toy_data(23, 1), 4, &params, 9).unwrap();
        assert_eq!(clients.len(), 4);
        assert!(clients.iter().all(|c| c.shard().len() == 5));
        check_equal_shards(&clients).unwrap();
    }

    #[test]
    fn one_round_gives_one_record_and_is_deterministic() {
        let spec = spec();
        let init = init_params(&spec, 5);
        let run = || {
            let mut clients = make_clients(toy_data(40, 5), 4, &init, 3).unwrap();
            let cfg = RoundConfig { local_iterations: 2, batch_size: 4, ..RoundConfig::new(TransformKind::AdaDefense) };
            run_federation(&mut clients, &spec, init.clone(), &cfg, 1, &toy_data(9, 6)).unwrap()
        };
        let a = run();
        assert_eq!(a.records.len(), 1);
        assert_eq!(a, run());
    }

    #[test]
    fn message_wire_format_carries_only_payload() {
        let msg = message(3, 17, &[0.25, -1.5, 8.0]);
        let bytes = msg.to_bytes();
        assert_eq!(bytes.len(), 3 * 8 + 3 * 8);
        let back = StandinMessage::from_bytes(&bytes, &msg.payload).unwrap();
        assert_eq!(back, msg);
        assert!(StandinMessage::from_bytes(&bytes[..bytes.len() - 1], &msg.payload).is_err());
    }
}
