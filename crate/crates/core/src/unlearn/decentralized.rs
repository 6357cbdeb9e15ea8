use log::info;

use super::{
    delete_class, holder_ratio, make_perturbation_set, mix_batches, Scheme, UnlearnOutcome,
    UnlearningPlan,
};
use crate::error::Result;
use crate::fedsim::{federated_round, ChannelSet, Control, FederationState, RoundReport};
use crate::nn::Model;
use crate::seed::derive_seed;

/// Federated unlearning that exchanges only the influential channels.
///
/// Every client deletes the target class from its data (permanently, the
/// federation keeps the remaining data) and derives its perturbation set
/// once. Each unlearning epoch is one federated round starting at
/// `fed.round`: the server broadcasts `T`, clients train `T` with everything
/// else frozen on their mixed stream, upload deltas for `T`, and the server
/// averages them. Participant draws and shuffles use the same streams as
/// ordinary training, so with `T` = all channels and ratio 0 the result is
/// exactly that of ordinary training on the remaining data.
pub fn decentralized_unlearn(
    fed: &mut FederationState,
    plan: &UnlearningPlan,
    mut observer: impl FnMut(&RoundReport, &Model) -> Result<Control>,
) -> Result<UnlearnOutcome> {
    plan.check(&fed.server_model, Scheme::Decentralized)?;
    let y_u = plan.request.target_class;
    let class_count = fed.server_model.class_count();

    let mut perturbations = Vec::with_capacity(fed.clients.len());
    for client in &mut fed.clients {
        let (remaining, removed) = delete_class(&client.data, y_u);
        info!(
            "client {}: deleted {} samples of class {y_u}, {} remain",
            client.id,
            removed.len(),
            remaining.len()
        );
        let seed = derive_seed(client.rng_seed, &format!("perturbation/{y_u}"));
        perturbations.push(make_perturbation_set(&removed, y_u, class_count, seed)?);
        client.data = remaining;
    }

    let mut cfg = fed.config.clone();
    if let Some(lr) = plan.learning_rate {
        cfg.learning_rate = lr;
    }
    cfg.validate()?;
    let channels = ChannelSet::Only(plan.influential.channels());
    let mut epochs = Vec::with_capacity(plan.unlearn_epochs);
    for _ in 0..plan.unlearn_epochs {
        let round = fed.round;
        let (next, report) = federated_round(
            &fed.server_model,
            &fed.clients,
            &cfg,
            round,
            &channels,
            |client| {
                let pert = &perturbations[client.id];
                let ratio = holder_ratio(plan.perturbation_ratio, client.data.len(), pert.len());
                mix_batches(&client.data, pert, ratio, client.round_seed(round))
            },
        )?;
        fed.server_model = next;
        fed.round += 1;
        let stop = observer(&report, &fed.server_model)? == Control::Stop;
        epochs.push(report);
        if stop {
            break;
        }
    }
    Ok(UnlearnOutcome {
        model: fed.server_model.clone(),
        epochs,
    })
}
