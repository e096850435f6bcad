use cosmwasm_std::{entry_point, BankMsg, Coin, DepsMut, Env, MessageInfo, Response, Uint128};

use crate::error::ContractError;
use crate::msg::{ExecuteMsg, InstantiateMsg};
use crate::state::{Balance, Config, BALANCES, CONFIG};

pub const DENOM: &str = "uawesome";

#[entry_point]
pub fn instantiate(
    deps: DepsMut,
    _env: Env,
    _info: MessageInfo,
    _msg: InstantiateMsg,
) -> Result<Response, ContractError> {
    CONFIG.save(deps.storage, &Config { total_supply: Uint128::zero() })?;
    Ok(Response::new().add_attribute("action", "instantiate"))
}

#[entry_point]
pub fn execute(
    deps: DepsMut,
    env: Env,
    info: MessageInfo,
    msg: ExecuteMsg,
) -> Result<Response, ContractError> {
    match msg {
        ExecuteMsg::Burn { shares } => burn(deps, env, info, shares),
    }
}

pub fn burn(deps: DepsMut, env: Env, info: MessageInfo, shares: Uint128) -> Result<Response, ContractError> {
    let contract_balance = deps
        .querier
        .query_balance(env.contract.address.to_string(), DENOM)?;
    let total_assets = contract_balance.amount;
    let mut config = CONFIG.load(deps.storage)?;
    let total_supply = config.total_supply;

    let asset_to_return = shares.multiply_ratio(total_assets, total_supply);
    if asset_to_return.is_zero() {
        return Err(ContractError::ZeroAmountNotAllowed {});
    }

    let mut user = BALANCES
        .load(deps.storage, &info.sender)
        .unwrap_or(Balance { amount: Uint128::zero() });
    user.amount = user.amount.checked_sub(shares)?;
    config.total_supply = config.total_supply.checked_sub(shares)?;

    CONFIG.save(deps.storage, &config)?;
    BALANCES.save(deps.storage, &info.sender, &user)?;

    let msg = BankMsg::Send {
        to_address: info.sender.to_string(),
        amount: vec![Coin {
            denom: DENOM.to_string(),
            amount: asset_to_return,
        }],
    };

    Ok(Response::new()
        .add_attribute("action", "burn")
        .add_attribute("user", info.sender.to_string())
        .add_attribute("asset", asset_to_return.to_string())
        .add_attribute("shares", shares.to_string())
        .add_message(msg))
}
