import math

from flask import Flask, request, jsonify

import config
from engine import decide
from logging_config import setup_logging
from metrics import sweep
from reports import ReportCache, report_key
from workload import PlanQuery, calibrated_profile, generate_stream, node_count, normalize_input_size, raw_input_size

app = Flask(__name__)
logger = setup_logging()

MAX_SWEEP_TASKS = 10_000


def parse_windows(text: str) -> list:
    return [int(part) for part in text.split(',') if part.strip()]


@app.route('/')
def index():
    return jsonify(
        service='predictive offloading',
        endpoints=['/decide', '/input_size', '/sweep'],
        default_windows=list(config.DEFAULT_WINDOWS),
    )


@app.route('/decide', methods=['GET'])
def decide_route():
    p_local = request.args.get('p_local', type=float)
    p_cloud = request.args.get('p_cloud', type=float)
    if p_local is None or p_cloud is None:
        return jsonify(error="Both p_local and p_cloud are required numbers"), 400
    if math.isnan(p_local) or math.isnan(p_cloud):
        return jsonify(error="invalid prediction"), 400

    decision = decide(p_local, p_cloud)
    return jsonify(target=decision.target.value, p_local=p_local, p_cloud=p_cloud)


@app.route('/input_size', methods=['GET'])
def input_size_route():
    try:
        start = (request.args.get('ax', type=float), request.args.get('ay', type=float))
        goal = (request.args.get('bx', type=float), request.args.get('by', type=float))
        if None in start or None in goal:
            return jsonify(error="ax, ay, bx and by are required numbers"), 400
        g = request.args.get('g', config.DEFAULT_GRID_RESOLUTION, type=float)
        map_scale = request.args.get('map_scale', config.MAP_SCALE, type=float)

        n = node_count(PlanQuery(start, goal, g))
        raw = raw_input_size(n)
        return jsonify(n=n, raw=raw, d=normalize_input_size(raw, map_scale))

    except ValueError as e:
        return jsonify(error=str(e)), 400


@app.route('/sweep', methods=['GET'])
def sweep_route():
    try:
        seed = request.args.get('seed', config.DEFAULT_SEED, type=int)
        count = request.args.get('count', config.DEFAULT_STREAM_SIZE, type=int)
        windows = parse_windows(request.args.get('windows', '')) or list(config.DEFAULT_WINDOWS)
        if not 1 <= count <= MAX_SWEEP_TASKS:
            return jsonify(error=f"count must be between 1 and {MAX_SWEEP_TASKS}"), 400

        cache = ReportCache()
        key = report_key(seed, count, windows)
        cached = cache.get_cached_report(key)
        if cached:
            logger.debug("Retrieved sweep report from cache")
            return jsonify(report=cached, cached=True)

        stream = generate_stream(calibrated_profile(), count, seed)
        report = sweep(stream, windows).to_dict()
        cache.save_report_to_cache(key, report)
        return jsonify(report=report, cached=False)

    except ValueError as e:
        return jsonify(error=str(e)), 400
    except Exception as e:
        logger.error(f"Sweep failed: {e}")
        return jsonify(error=str(e)), 500


if __name__ == '__main__':
    app.run(debug=True)
