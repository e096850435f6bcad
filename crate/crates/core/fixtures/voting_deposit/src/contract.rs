use cosmwasm_std::{to_json_binary, Binary, Deps, DepsMut, MessageInfo, Response, StdResult};
use cw_utils::must_pay;

use crate::error::ContractError;
use crate::state::{UserInfo, VOTING_POWER};

pub const DENOM: &str = "uawesome";

/// Entry point for user to stake tokens
pub fn deposit(deps: DepsMut, info: MessageInfo) -> Result<Response, ContractError> {
    // validate denom
    let amount = must_pay(&info, DENOM).unwrap();

    // increase total stake
    let mut user = VOTING_POWER
        .load(deps.storage, &info.sender)
        .unwrap_or_default();
    user.total_tokens += amount;

    VOTING_POWER
        .save(deps.storage, &info.sender, &user)
        .unwrap();

    Ok(Response::new()
        .add_attribute("action", "deposit")
        .add_attribute("user", info.sender)
        .add_attribute("amount", amount))
}

pub fn query_power(deps: Deps, user: String) -> StdResult<Binary> {
    let addr = deps.api.addr_validate(&user)?;
    to_json_binary(&VOTING_POWER.load(deps.storage, &addr)?)
}

fn total(info: &UserInfo) -> u128 {
    info.total_tokens.u128() + info.voting_power.u128()
}
