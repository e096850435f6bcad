#[cfg(not(feature = "library"))]
use cosmwasm_std::entry_point;
use cosmwasm_std::{
    to_json_binary, BankMsg, Binary, Coin, Deps, DepsMut, Env, MessageInfo, Response, StdResult, Uint128,
};
use cw_utils::must_pay;

use crate::error::ContractError;
use crate::msg::{ExecuteMsg, InstantiateMsg, QueryMsg};
use crate::state::{Lockup, LAST_ID, LOCKUPS};

pub const DENOM: &str = "uawesome";
pub const MINIMUM_DEPOSIT_AMOUNT: u128 = 10;
pub const LOCK_PERIOD: u64 = 5;

#[cfg_attr(not(feature = "library"), entry_point)]
pub fn instantiate(
    deps: DepsMut,
    _env: Env,
    _info: MessageInfo,
    _msg: InstantiateMsg,
) -> Result<Response, ContractError> {
    LAST_ID.save(deps.storage, &1)?;
    Ok(Response::new().add_attribute("action", "instantiate"))
}

#[cfg_attr(not(feature = "library"), entry_point)]
pub fn execute(
    deps: DepsMut,
    env: Env,
    info: MessageInfo,
    msg: ExecuteMsg,
) -> Result<Response, ContractError> {
    match msg {
        ExecuteMsg::Deposit {} => deposit(deps, env, info),
        ExecuteMsg::Withdraw { ids } => withdraw(deps, env, info, ids),
    }
}

/// Entry point for a user to lock funds
pub fn deposit(deps: DepsMut, env: Env, info: MessageInfo) -> Result<Response, ContractError> {
    let amount = must_pay(&info, DENOM).unwrap();
    if amount < Uint128::new(MINIMUM_DEPOSIT_AMOUNT) {
        return Err(ContractError::Std(cosmwasm_std::StdError::generic_err("Insufficient deposit")));
    }

    let id = LAST_ID.load(deps.storage)?;
    let lock = Lockup {
        id,
        owner: info.sender,
        amount,
        release_timestamp: env.block.time.plus_seconds(LOCK_PERIOD),
    };
    LOCKUPS.save(deps.storage, id, &lock)?;
    LAST_ID.save(deps.storage, &(id + 1))?;

    Ok(Response::new()
        .add_attribute("action", "deposit")
        .add_attribute("id", id.to_string())
        .add_attribute("owner", lock.owner)
        .add_attribute("amount", amount))
}

/// Entry point for a user to withdraw previously locked funds
pub fn withdraw(
    deps: DepsMut,
    env: Env,
    info: MessageInfo,
    ids: Vec<u64>,
) -> Result<Response, ContractError> {
    let mut total_amount = Uint128::zero();
    for id in ids.clone() {
        let lock = LOCKUPS.load(deps.storage, id)?;
        if lock.owner != info.sender {
            return Err(ContractError::Unauthorized {});
        }
        if env.block.time < lock.release_timestamp {
            return Err(ContractError::Locked {});
        }
        total_amount += lock.amount;
        LOCKUPS.remove(deps.storage, id);
    }

    let msg = BankMsg::Send {
        to_address: info.sender.to_string(),
        amount: vec![Coin {
            denom: DENOM.to_string(),
            amount: total_amount,
        }],
    };

    Ok(Response::new()
        .add_attribute("action", "withdraw")
        .add_message(msg))
}

#[cfg_attr(not(feature = "library"), entry_point)]
pub fn query(deps: Deps, _env: Env, msg: QueryMsg) -> StdResult<Binary> {
    match msg {
        QueryMsg::GetLockup { id } => to_json_binary(&LOCKUPS.load(deps.storage, id)?),
    }
}
