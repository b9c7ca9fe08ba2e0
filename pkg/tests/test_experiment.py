from dataclasses import replace

import numpy as np
import pytest

from stabilis import event_log, experiment, synthetic
from stabilis.encoding import extract_prefixes
from stabilis.errors import ParameterError, SearchError, SplitError
from stabilis.event_log import SplitSpec
from stabilis.experiment import APPROACHES, ParamDistribution, SearchSpace, ValidationStrategy

from conftest import T0, make_log, make_trace

SIGNAL_EVENT = 4
TINY_RF = {'n_estimators': 5, 'max_features': 0.5}


def _balanced_log(n):
    return make_log([make_trace(f"c{i:03d}", 3, outcome=i % 2) for i in range(n)])


def _trained(log, config=TINY_RF, approach='RF_agg'):
    train, test = event_log.temporal_split(log, SplitSpec(0.8))
    trained = experiment.train_approach(APPROACHES[approach], train, {0: dict(config)}, seed=1)
    experiment.fit_calibrators(trained, trained, [], mode='none')
    return trained, train, test


def _mean_auc(report, lengths):
    values = [report.auc_by_prefix_len[t] for t in lengths if t in report.auc_by_prefix_len]
    return float(np.mean(values))


def test_sample_config_bounds_and_determinism():
    draws = [experiment.sample_config(experiment.RF_SPACE, 22, i) for i in range(16)]
    assert all(0.01 <= d['max_features'] <= 0.9 for d in draws)
    assert all(150 <= d['n_estimators'] <= 1000 for d in draws)
    assert experiment.sample_config(experiment.RF_SPACE, 22, 3) == draws[3]
    assert len({d['max_features'] for d in draws}) == 16


def test_gbt_space_bounds():
    for i in range(16):
        config = experiment.sample_config(experiment.GBT_SPACE, 5, i)
        for name, dist in experiment.GBT_SPACE.params.items():
            assert dist.contains(config[name])
        assert isinstance(config['max_depth'], int)


def test_search_space_overrides():
    space = SearchSpace.from_dict('rf', {'n_estimators': {'kind': 'uniform_int', 'low': 10, 'high': 20}})
    assert space.params['n_estimators'].high == 20
    assert space.params['max_features'] == experiment.RF_SPACE.params['max_features']
    with pytest.raises(ParameterError):
        SearchSpace.from_dict('rf', {'depth': {'low': 1, 'high': 2}})
    with pytest.raises(ParameterError):
        ParamDistribution('log_uniform', 0.0, 1.0)


def test_split_validation_proportions():
    inner, validation = experiment.split_validation(_balanced_log(100), seed=4)
    assert (len(inner), len(validation)) == (80, 20)
    assert not set(inner.case_ids) & set(validation.case_ids)
    again, _ = experiment.split_validation(_balanced_log(100), seed=4)
    assert again.case_ids == inner.case_ids


def test_split_validation_needs_five_cases():
    with pytest.raises(SplitError):
        experiment.split_validation(_balanced_log(4))


def test_split_validation_needs_both_classes():
    one_class = make_log([make_trace(f"c{i}", 2, outcome=1) for i in range(10)])
    with pytest.raises(SplitError):
        experiment.split_validation(one_class)


def test_goodness_arithmetic():
    strategy = ValidationStrategy('combined_5run')
    stable = strategy.goodness([0.8] * 5, 1.0)
    accurate = strategy.goodness([0.83] * 5, 0.7)
    assert stable == pytest.approx((0.8 + 5) / 6)
    assert accurate == pytest.approx((0.83 + 3.5) / 6)
    assert stable > accurate
    assert ValidationStrategy('auc_1run').goodness([0.7, 0.9]) == 0.7
    assert ValidationStrategy('auc_5run').goodness([0.7, 0.9]) == pytest.approx(0.8)


def test_stability_term():
    assert experiment.stability_term(0.0, 0.0) == 1.0
    assert experiment.stability_term(0.5, 2.0) == 0.75
    assert experiment.stability_term(2.0, 2.0) == 0.0


def test_unknown_strategy():
    with pytest.raises(ParameterError):
        ValidationStrategy('auc_3run')


def test_reused_seed_gives_zero_spread(signal_log):
    inner, validation = experiment.split_validation(signal_log, seed=1)
    result = experiment.evaluate_config(
        TINY_RF, APPROACHES['RF_agg'], inner, validation, ValidationStrategy('auc_5run', reuse_seed=True), seed=1,
    )
    assert not result.failed
    assert len(set(result.seeds)) == 1
    assert result.mspd == 0.0
    assert experiment.stability_term(result.mspd, 1.0) == 1.0


def test_distinct_seeds_spread(signal_log):
    inner, validation = experiment.split_validation(signal_log, seed=1)
    result = experiment.evaluate_config(
        TINY_RF, APPROACHES['RF_agg'], inner, validation, ValidationStrategy('auc_5run'), seed=1,
    )
    assert len(set(result.seeds)) == 5
    assert result.mspd > 0.0
    assert result.goodness == pytest.approx(np.mean(result.aucs))


def test_failed_config_marked(signal_log):
    inner, validation = experiment.split_validation(signal_log, seed=1)
    result = experiment.evaluate_config(
        {'n_estimators': 0, 'max_features': 0.5}, APPROACHES['RF_agg'], inner, validation, ValidationStrategy(),
    )
    assert result.failed
    assert 'n_estimators' in result.error


def test_all_failed_search(signal_log):
    space = SearchSpace('rf', {
        'n_estimators': ParamDistribution('uniform_int', 0, 0),
        'max_features': ParamDistribution('uniform', 0.5, 0.5),
    })
    with pytest.raises(SearchError):
        experiment.run_search(APPROACHES['RF_agg'], signal_log, ValidationStrategy(), space, n_iter=2, retrain=False)


def test_one_point_space_wins(signal_log):
    space = SearchSpace('rf', {
        'n_estimators': ParamDistribution('uniform_int', 4, 4),
        'max_features': ParamDistribution('uniform', 0.4, 0.4),
    })
    found = experiment.run_search(APPROACHES['RF_agg'], signal_log, ValidationStrategy(), space, n_iter=2)
    assert found.best_config == {'max_features': 0.4, 'n_estimators': 4}
    assert found.best_goodness == max(r.goodness for r in found.results)
    assert found.final is not None


def test_combined_search_repeatable(signal_log):
    space = SearchSpace.from_dict('gbt', {
        'n_estimators': {'kind': 'uniform_int', 'low': 3, 'high': 5},
        'max_depth': {'kind': 'uniform_int', 'low': 2, 'high': 3},
    })
    strategy = ValidationStrategy('combined_5run')
    runs = [
        experiment.run_search(APPROACHES['XGB_agg'], signal_log, strategy, space, seed=3, n_iter=2, jobs=2, retrain=False)
        for _ in range(2)
    ]
    assert runs[0].best_iteration == runs[1].best_iteration
    assert [r.goodness for r in runs[0].results] == [r.goodness for r in runs[1].results]
    assert all(r.mspd is not None for r in runs[0].results)
    # the noisiest candidate gets a zero stability term
    worst = max(runs[0].results, key=lambda r: r.mspd)
    assert worst.goodness == pytest.approx(worst.mean_auc / 6)


def _result(iteration, aucs, mspd, failed=False):
    return experiment.ConfigResult(iteration, {'i': iteration}, aucs=list(aucs), mspd=mspd, failed=failed)


def test_strategy_winner_per_strategy():
    lucky = _result(0, [0.90, 0.70, 0.70, 0.70, 0.70], 0.04)
    steady = _result(1, [0.85] * 5, 0.001)
    steady_twin = _result(2, [0.85] * 5, 0.001)
    broken = _result(3, [], None, failed=True)
    results = [lucky, steady, steady_twin, broken]

    best, goodness = experiment.strategy_winner(results, ValidationStrategy('auc_1run'))
    assert (best.iteration, goodness) == (0, 0.90)
    best, goodness = experiment.strategy_winner(results, ValidationStrategy('auc_5run'))
    assert (best.iteration, goodness) == (1, pytest.approx(0.85))
    best, goodness = experiment.strategy_winner(results, ValidationStrategy('combined_5run'))
    assert best.iteration == 1
    assert goodness == pytest.approx((0.85 + 5 * (1 - 0.001 / 0.04)) / 6)


def test_strategy_winner_needs_enough_runs():
    with pytest.raises(SearchError):
        experiment.strategy_winner([_result(0, [0.8], None)], ValidationStrategy('auc_5run'))
    best, _ = experiment.strategy_winner([_result(0, [0.8], None)], ValidationStrategy('auc_1run'))
    assert best.iteration == 0


def test_auc_1run_ranking_matches_auc_1run_search(signal_log):
    space = SearchSpace.from_dict('gbt', {
        'n_estimators': {'kind': 'uniform_int', 'low': 3, 'high': 5},
        'max_depth': {'kind': 'uniform_int', 'low': 2, 'high': 3},
    })
    split = experiment.split_validation(signal_log, seed=3)
    combined = experiment.run_search(
        APPROACHES['XGB_agg'], signal_log, ValidationStrategy('combined_5run'), space, seed=3, n_iter=3, split=split, retrain=False,
    )
    single = experiment.run_search(
        APPROACHES['XGB_agg'], signal_log, ValidationStrategy('auc_1run'), space, seed=3, n_iter=3, split=split, retrain=False,
    )
    best, goodness = experiment.strategy_winner(combined.results, ValidationStrategy('auc_1run'))
    assert best.iteration == single.best_iteration
    assert goodness == single.best_goodness
    assert [r.aucs[0] for r in combined.results] == [r.aucs[0] for r in single.results]


def test_combined_run_reports_auc_1run_comparison(signal_log, small_settings):
    settings = replace(
        small_settings, strategy='combined_5run', n_iter=4, interrun_runs=2,
        search_space={'gbt': {
            'n_estimators': {'kind': 'uniform_int', 'low': 10, 'high': 15},
            'max_depth': {'kind': 'uniform_int', 'low': 2, 'high': 4},
            'learning_rate': {'kind': 'uniform', 'low': 0.2, 'high': 0.3},
        }},
    )
    manifest = {}
    experiment.run_approach(signal_log, 'XGB_agg', settings, manifest)

    comparison = manifest['strategy_comparison']
    assert set(comparison) == {'combined_5run', 'auc_1run'}
    combined, single = comparison['combined_5run'], comparison['auc_1run']
    assert combined['iteration'] == manifest['winner']['iteration']
    assert single['first_auc'] == max(r['aucs'][0] for r in manifest['search'] if r['aucs'])
    assert combined['mspd'] <= single['mspd']

    assert manifest['winner_mspd'] >= 0.0
    assert manifest['auc_1run_winner_mspd'] >= 0.0
    if combined['iteration'] == single['iteration']:
        assert manifest['winner_mspd'] == manifest['auc_1run_winner_mspd']


def test_single_run_strategy_has_no_comparison(signal_log, small_settings):
    manifest = {}
    experiment.run_approach(signal_log, 'RF_agg', replace(small_settings, interrun_runs=2), manifest)
    assert 'strategy_comparison' not in manifest
    assert 'auc_1run_winner_mspd' not in manifest
    assert manifest['winner_mspd'] >= 0.0


def test_space_must_match_classifier(signal_log):
    with pytest.raises(ParameterError):
        experiment.run_search(APPROACHES['RF_agg'], signal_log, ValidationStrategy(), experiment.GBT_SPACE)


def test_presets():
    shared = experiment.load_preset('production', 'RF_agg')
    assert shared == {0: {'n_estimators': 769, 'max_features': 0.02}}
    buckets = experiment.load_preset('production', 'XGB_idx_mul')
    assert sorted(buckets) == [1, 5, 10, 20]
    assert buckets[5]['max_depth'] == 3
    assert experiment.config_for(buckets, 7) == buckets[5]
    with pytest.raises(ParameterError):
        experiment.load_preset('unknown_log', 'RF_agg')


def test_config_for_falls_back_to_shared():
    assert experiment.config_for({0: TINY_RF}, 6) == TINY_RF
    with pytest.raises(ParameterError):
        experiment.config_for({}, 1)


def test_multi_approach_buckets_and_routing(signal_log):
    trained, _, test = _trained(signal_log, approach='RF_idx_mul')
    longest = max(len(t) for t in signal_log.traces)
    assert sorted(trained.models) == list(range(1, longest + 1))
    assert trained.route(3) == 3
    assert trained.route(longest + 5) == longest
    assert all(spec.max_len == key for key, spec in trained.encoders.items())
    scores = experiment.score_prefixes(trained, extract_prefixes(test))
    assert np.all((scores >= 0) & (scores <= 1))


def test_approach_save_load(signal_log, tmp_path):
    trained, train, test = _trained(signal_log, approach='XGB_idx_pad', config={
        'n_estimators': 4, 'learning_rate': 0.2, 'subsample': 0.8, 'max_depth': 3,
        'colsample_bytree': 0.8, 'min_child_weight': 1,
    })
    inner, validation = experiment.split_validation(train, seed=2)
    experiment.fit_calibrators(trained, trained, extract_prefixes(validation), mode='per_bucket')
    restored = experiment.load_approach(experiment.save_approach(trained, tmp_path / 'approach.json'))
    prefixes = extract_prefixes(test)
    assert np.array_equal(experiment.score_prefixes(restored, prefixes), experiment.score_prefixes(trained, prefixes))
    assert restored.calibration_sources == {0: 'bucket'}


def test_index_encoder_clips_long_test_prefixes(signal_log):
    trained, _, _ = _trained(signal_log, approach='RF_idx_pad')
    longer = make_log([make_trace('long', trained.encoders[0].max_len + 3, outcome=1)], signal_log.schema)
    scores = experiment.score_prefixes(trained, extract_prefixes(longer))
    assert len(scores) == trained.encoders[0].max_len + 3


def test_calibration_falls_back_to_pooled(signal_log):
    trained, train, _ = _trained(signal_log, approach='RF_idx_mul')
    _, validation = experiment.split_validation(train, seed=2)
    # single-class buckets cannot be fitted on their own
    prefixes = [p for p in extract_prefixes(validation) if p.prefix_len > 1 or p.outcome == 1]
    experiment.fit_calibrators(trained, trained, prefixes, mode='per_bucket')
    assert trained.calibration_sources[1] == 'pooled'
    assert trained.calibration_sources[2] == 'bucket'


def test_empty_alpha_grid_gives_raw_report(signal_log):
    trained, _, test = _trained(signal_log)
    evaluation = experiment.evaluate_on_test(trained, test, alpha_grid=())
    assert list(evaluation.reports) == [None]
    assert evaluation.n_skipped == 0


def test_short_test_cases_skipped(signal_log):
    train, _ = event_log.temporal_split(signal_log, SplitSpec(0.8))
    trained = experiment.train_approach(APPROACHES['RF_agg'], train, {0: TINY_RF}, seed=1, min_prefix_len=3)
    test = make_log([make_trace('a', 2, outcome=0), make_trace('b', 5, outcome=1), make_trace('c', 4, outcome=0)], signal_log.schema)
    evaluation = experiment.evaluate_on_test(trained, test, alpha_grid=(0.5,))
    assert evaluation.n_skipped == 1
    assert sorted(evaluation.reports[None].n_cases_by_prefix_len) == [3, 4, 5]


def test_auto_truncation_reads_train_part_only():
    traces = [make_trace(f"p{i}", 3, outcome=1, start=T0.replace(hour=1 + i)) for i in range(6)]
    traces += [make_trace(f"n{i}", 5, outcome=0, start=T0.replace(hour=7 + i)) for i in range(10)]
    traces += [make_trace(f"late{i}", 40, outcome=1, start=T0.replace(day=5, hour=i)) for i in range(4)]
    log = make_log(traces)
    assert event_log.suggest_truncation(log) == 40
    assert experiment.resolve_truncation(log, experiment.RunSettings(truncation='auto')) == 3
    assert experiment.resolve_truncation(log, experiment.RunSettings(truncation='none')) == 40
    assert experiment.resolve_truncation(log, experiment.RunSettings(truncation=7)) == 7


def test_preprocess_with_completion_filter():
    frame, schema, rule = synthetic.signal_frame(n_cases=30, seed=5)
    settings = experiment.RunSettings(truncation='none', end_activities=('Archive',))
    prepared, stats = experiment.preprocess(event_log.log_from_frame(frame, schema), rule, settings)
    assert all(t.events[-1].activity == 'Archive' for t in prepared.traces)
    assert stats.n_traces == len(prepared)


def test_run_approach_end_to_end(signal_log, small_settings):
    manifest = {}
    result = experiment.run_approach(signal_log, 'RF_agg', small_settings, manifest)
    reports = result.evaluation.reports
    assert list(reports) == [None, 0.0, 0.5, 0.9]

    raw = reports[None]
    assert reports[0.0].auc_by_prefix_len == raw.auc_by_prefix_len
    assert reports[0.0].temporal_stability == raw.temporal_stability
    assert reports[0.9].temporal_stability >= raw.temporal_stability

    lengths = sorted(raw.n_cases_by_prefix_len)
    informed = _mean_auc(raw, [t for t in lengths if t >= SIGNAL_EVENT])
    blind = _mean_auc(raw, [t for t in lengths if t < SIGNAL_EVENT])
    assert informed >= 0.85
    assert informed - blind >= 0.2

    assert manifest['stages'] == ['split', 'search', 'train', 'calibrate', 'evaluate']
    assert manifest['winner']['iteration'] in (0, 1)
    assert len(manifest['search']) == 2
    assert manifest['calibration']['sources'] == {'0': 'bucket'}
    assert 'winner_mspd' not in manifest


def test_run_approach_deterministic(small_settings):
    frame, schema, rule = synthetic.signal_frame(n_cases=60, min_len=5, max_len=7, signal_event=3, seed=11)
    prepared, _ = experiment.preprocess(event_log.log_from_frame(frame, schema), rule, experiment.RunSettings(truncation='none'))
    first = experiment.run_approach(prepared, 'XGB_agg', small_settings)
    second = experiment.run_approach(prepared, 'XGB_agg', small_settings)
    for alpha in first.evaluation.reports:
        assert first.evaluation.reports[alpha].auc_by_prefix_len == second.evaluation.reports[alpha].auc_by_prefix_len
        assert first.evaluation.reports[alpha].temporal_stability == second.evaluation.reports[alpha].temporal_stability
    assert first.manifest == second.manifest


def test_multiclassifier_long_cases_and_interrun(signal_log, small_settings):
    settings = replace(small_settings, interrun_runs=2, long_cases_only=True)
    manifest = {}
    result = experiment.run_approach(signal_log, 'XGB_idx_mul', settings, manifest)
    assert manifest['winner_mspd'] >= 0.0
    assert result.evaluation.long_reports
    assert result.evaluation.reports[0.9].temporal_stability >= result.evaluation.reports[None].temporal_stability

    report, summary = experiment.report_frames([result])
    assert set(summary['slice']) == {'all', 'long_cases'}
    assert set(summary['alpha']) == {'none', '0', '0.5', '0.9'}
    figures = experiment.figure_frames(report, summary)
    assert sorted(figures) == ['auc_vs_alpha', 'auc_vs_prefix', 'ts_vs_alpha', 'ts_vs_auc']
    assert len(figures['ts_vs_alpha']) == 4


def test_per_bucket_search(signal_log, small_settings):
    frame, schema, rule = synthetic.signal_frame(n_cases=80, min_len=3, max_len=4, signal_event=2, seed=13)
    prepared, _ = experiment.preprocess(event_log.log_from_frame(frame, schema), rule, experiment.RunSettings(truncation='none'))
    manifest = {}
    result = experiment.run_approach(prepared, 'RF_idx_mul', replace(small_settings, per_bucket_search=True), manifest)
    winners = [w['bucket'] for w in manifest['bucket_winners']]
    assert winners[:2] == [1, 2]
    assert set(winners) <= {1, 2, 3, 4}
    assert set(result.trained.configs) == {1, 2, 3, 4}


@pytest.mark.slow
def test_reproduction_on_larger_log():
    frame, schema, rule = synthetic.signal_frame(n_cases=400, min_len=8, max_len=12, seed=22)
    prepared, _ = experiment.preprocess(event_log.log_from_frame(frame, schema), rule, experiment.RunSettings(truncation='none'))
    settings = experiment.RunSettings(
        n_iter=2,
        strategy='combined_5run',
        truncation='none',
        interrun_runs=5,
        search_space={'gbt': {
            'n_estimators': {'kind': 'uniform_int', 'low': 20, 'high': 30},
            'max_depth': {'kind': 'uniform_int', 'low': 2, 'high': 3},
        }},
    )
    manifest = {}
    result = experiment.run_approach(prepared, 'XGB_idx_mul', settings, manifest)
    raw = result.evaluation.reports[None]
    informed = _mean_auc(raw, [t for t in raw.auc_by_prefix_len if t >= 5])
    assert informed >= 0.85
    for alpha in settings.alpha_grid:
        assert result.evaluation.reports[alpha].temporal_stability >= raw.temporal_stability
