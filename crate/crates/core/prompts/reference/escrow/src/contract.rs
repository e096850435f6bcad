#[cfg(not(feature = "library"))]
use cosmwasm_std::entry_point;
use cosmwasm_std::{BankMsg, Coin, DepsMut, Env, MessageInfo, Response};
use cw_utils::must_pay;

use crate::error::ContractError;
use crate::msg::{ExecuteMsg, InstantiateMsg};
use crate::state::{Config, Escrow, CONFIG, ESCROWS, NEXT_ID};

pub const DENOM: &str = "uawesome";

#[cfg_attr(not(feature = "library"), entry_point)]
pub fn instantiate(
    deps: DepsMut,
    _env: Env,
    _info: MessageInfo,
    msg: InstantiateMsg,
) -> Result<Response, ContractError> {
    let arbiter = deps.api.addr_validate(&msg.arbiter)?;
    CONFIG.save(deps.storage, &Config { arbiter: arbiter.clone() })?;
    NEXT_ID.save(deps.storage, &1)?;
    Ok(Response::new()
        .add_attribute("action", "instantiate")
        .add_attribute("arbiter", arbiter))
}

#[cfg_attr(not(feature = "library"), entry_point)]
pub fn execute(
    deps: DepsMut,
    _env: Env,
    info: MessageInfo,
    msg: ExecuteMsg,
) -> Result<Response, ContractError> {
    match msg {
        ExecuteMsg::Deposit { beneficiary } => deposit(deps, info, beneficiary),
        ExecuteMsg::Release { id } => release(deps, info, id),
    }
}

/// Locks the sent funds until the arbiter releases them to the beneficiary
pub fn deposit(deps: DepsMut, info: MessageInfo, beneficiary: String) -> Result<Response, ContractError> {
    let amount = must_pay(&info, DENOM)?;
    let beneficiary = deps.api.addr_validate(&beneficiary)?;

    let id = NEXT_ID.load(deps.storage)?;
    let escrow = Escrow {
        id,
        depositor: info.sender,
        beneficiary,
        amount,
        released: false,
    };
    ESCROWS.save(deps.storage, id, &escrow)?;
    NEXT_ID.save(deps.storage, &(id + 1))?;

    Ok(Response::new()
        .add_attribute("action", "deposit")
        .add_attribute("id", id.to_string())
        .add_attribute("amount", amount))
}

/// Arbiter-only: pays an escrow out to its beneficiary
pub fn release(deps: DepsMut, info: MessageInfo, id: u64) -> Result<Response, ContractError> {
    let config = CONFIG.load(deps.storage)?;
    let mut escrow = ESCROWS
        .may_load(deps.storage, id)?
        .ok_or(ContractError::NotFound {})?;

    if info.sender != config.arbiter {
        return Err(ContractError::Unauthorized {});
    }
    if escrow.released {
        return Err(ContractError::AlreadyReleased {});
    }

    escrow.released = true;
    ESCROWS.save(deps.storage, id, &escrow)?;

    let msg = BankMsg::Send {
        to_address: escrow.beneficiary.to_string(),
        amount: vec![Coin {
            denom: DENOM.to_string(),
            amount: escrow.amount,
        }],
    };

    Ok(Response::new()
        .add_attribute("action", "release")
        .add_attribute("id", id.to_string())
        .add_message(msg))
}
