import numpy as np
import pytest

from flsim import attacks
from flsim.data import TriggerSpec, generate_task
from flsim.learning import ModelArch, TrainConfig, init_model, local_train
from flsim.linalg import DomainError, l2_distance

TRIG = [TriggerSpec((2,), (4.0,), 0), TriggerSpec((3,), (4.0,), 0)]


def test_select_malicious_count_and_stability():
    assert len(attacks.select_malicious(20, 0.25, 0)) == 5
    assert len(attacks.select_malicious(20, 0.0, 0)) == 0
    assert len(attacks.select_malicious(10, 0.45, 0)) == 4
    a = attacks.select_malicious(20, 0.4, 3)
    assert np.array_equal(a, attacks.select_malicious(20, 0.4, 3))
    assert np.all(np.diff(a) > 0)


def test_config_validation():
    with pytest.raises(DomainError):
        attacks.AdversaryConfig(pmr=1.0)
    with pytest.raises(DomainError):
        attacks.AdversaryConfig(strategy="nope")
    with pytest.raises(DomainError):
        attacks.AdversaryConfig(schedule=("attack", "sleep"))
    assert attacks.AdversaryConfig(pmr=0.4).in_contract
    assert not attacks.AdversaryConfig(pmr=0.5).in_contract


def test_scale_update():
    g = init_model(ModelArch((3, 2)), 0)
    u = g.with_params(g.params + 1.0)
    s = attacks.scale_update(u, g, 3.0)
    assert l2_distance(s.params, g.params) == pytest.approx(3 * l2_distance(u.params, g.params))
    assert np.array_equal(attacks.scale_update(u, g, 1.0).params, u.params)


def test_assign_backdoors_groups():
    tr = [TriggerSpec((i,), (1.0,)) for i in range(4)]
    m = attacks.assign_backdoors(range(8), tr, 4)
    assert [m[c] for c in range(8)] == [tr[0], tr[0], tr[1], tr[1], tr[2], tr[2], tr[3], tr[3]]
    with pytest.raises(DomainError):
        attacks.assign_backdoors(range(2), tr, 3)


def test_align_pdrs_in_range():
    p = attacks.align_pdrs(range(50), (0.05, 0.2), 0)
    assert all(0.05 <= v <= 0.2 for v in p.values())
    assert len(set(p.values())) > 1


def test_obfuscate_noise_scale():
    g = init_model(ModelArch((20, 16, 2)), 0)
    o = attacks.obfuscate(g, 0.034, 1)
    assert np.std(o.params - g.params) == pytest.approx(0.034, rel=0.15)
    assert np.array_equal(attacks.obfuscate(g, 0.0, 1).params, g.params)


def test_craft_update_strategies():
    data = generate_task(0, 2, 4, 80)
    g = init_model(ModelArch((4, 3, 2)), 0)
    tc = TrainConfig(0.1, 1, 16, 5)
    cfg = attacks.AdversaryConfig(pmr=0.5, triggers=TRIG, pdr=0.5)
    plan = attacks.make_plan(cfg, 4)
    c = int(plan.malicious[0])
    poisoned = attacks.craft_update(cfg, plan, g, data, tc, c)
    honest = local_train(g, data, tc)
    assert not np.array_equal(poisoned.params, honest.params)
    with pytest.raises(DomainError):
        benign = next(i for i in range(4) if i not in plan.malicious)
        attacks.craft_update(cfg, plan, g, data, tc, benign)
    scaled = attacks.AdversaryConfig(pmr=0.5, strategy="scaled_data_poison", triggers=TRIG, scale_factor=5.0)
    s = attacks.craft_update(scaled, attacks.make_plan(scaled, 4), g, data, tc, c)
    assert l2_distance(s.params, g.params) == pytest.approx(5 * l2_distance(poisoned.params, g.params))


def test_schedule_benign_round_trains_honestly():
    data = generate_task(0, 2, 4, 80)
    g = init_model(ModelArch((4, 3, 2)), 0)
    tc = TrainConfig(0.1, 1, 16, 5)
    cfg = attacks.AdversaryConfig(pmr=0.5, triggers=TRIG, schedule=("attack", "benign"))
    plan = attacks.make_plan(cfg, 4)
    c = int(plan.malicious[0])
    assert attacks.round_behaviour(cfg, 3) == "benign"
    assert np.array_equal(attacks.craft_update(cfg, plan, g, data, tc, c, 1).params, local_train(g, data, tc).params)


def test_multi_backdoor_plan():
    cfg = attacks.AdversaryConfig(pmr=0.4, strategy="multi_backdoor", triggers=TRIG, backdoors=2)
    plan = attacks.make_plan(cfg, 10)
    used = {plan.trigger_of[int(c)] for c in plan.malicious}
    assert used == set(TRIG)
