"""Independent brute-force oracles.

Everything here re-derives model quantities from first principles with
plain Python floats and math functions: no kernels, no caching, no shared
code with the implementation under test.  The triple enumeration walks
(tv, ov, option) exhaustively and recomputes the option choice from the
fee schedules at every single (tv, ov) cell.
"""

import math


def fee_lookup(option, ov):
    for lo, hi, fee in option.fees.brackets:
        if lo <= ov < hi:
            return fee
    raise AssertionError(f"no bracket contains {ov}")


def option_utility(option, ov, params):
    return (params.beta_speed[option.speed]
            + params.beta_slot[option.slot]
            + params.beta_time[option.time]
            + params.beta_date[option.date]
            + params.beta_fee * math.log(fee_lookup(option, ov) + 1.0))


def softmax(values):
    m = max(values)
    exps = [math.exp(v - m) for v in values]
    s = sum(exps)
    return [e / s for e in exps], m + math.log(s)


def option_choice(options, ov, params):
    utils = [option_utility(o, ov, params) for o in options]
    return softmax(utils)


def order_value_utility(ov, tv, options, params):
    _, l1 = option_choice(options, ov, params)
    return (params.beta_logsumdo * (tv / ov) * l1
            + params.beta_interval * (ov / tv) ** 2
            + params.beta_storage * ov)


def household_demand(household, scenario, params):
    """Full triple enumeration with no caching whatsoever."""
    options = scenario.options
    ov_grid = [int(v) for v in scenario.ov_grid]
    tv_grid = [int(v) for v in scenario.tv_grid]

    ov_logsums = []
    cond = []
    for tv in tv_grid:
        utils = [order_value_utility(ov, tv, options, params) for ov in ov_grid]
        probs, ls = softmax(utils)
        ov_logsums.append(ls)
        cond.append(probs)

    size = min(household.size, 20)
    need = params.alpha * float(size)
    tv_utils = [
        params.beta_logsumov * ov_logsums[t]
        + params.beta_hhs * (need - tv_grid[t]) ** 2
        for t in range(len(tv_grid))
    ]
    p_tv, _ = softmax(tv_utils)

    e_tv = e_freq = e_ov = 0.0
    option_orders = [0.0] * len(options)
    for t, tv in enumerate(tv_grid):
        e_tv += p_tv[t] * tv
        for j, ov in enumerate(ov_grid):
            joint = p_tv[t] * cond[t][j]
            rate = joint * (tv / ov)
            e_freq += rate
            e_ov += joint * ov
            do_probs, _ = option_choice(options, ov, params)
            for i in range(len(options)):
                option_orders[i] += rate * do_probs[i]

    shares = {o.id: option_orders[i] / e_freq for i, o in enumerate(options)}
    return {
        "expected_tv": e_tv,
        "expected_frequency": e_freq,
        "expected_ov": e_ov,
        "option_shares": shares,
        "p_tv": p_tv,
    }
