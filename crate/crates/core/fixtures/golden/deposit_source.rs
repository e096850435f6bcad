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
