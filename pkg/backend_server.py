#!/usr/bin/env python3
"""
Backend API Server for the Eco-Lane Planner
Exposes single plans and cost-to-go maps of the bundled scenarios over HTTP
"""

import math
import os
import sys
import traceback
from datetime import datetime

from flask import Flask, jsonify, request
from flask_cors import CORS

import config
from config import get_logger, list_scenarios, resolve_scenario_path
from errors import PlannerError
from heuristic import HEURISTIC_KINDS
from sim import load_scenario, plan_once, scenario_heuristic, trajectory_rows

logger = get_logger("BACKEND")

app = Flask(__name__)
CORS(app)


def _finite_or_none(x):
    return float(x) if math.isfinite(x) else None


def _scenario_from_body():
    data = request.get_json(silent=True)
    if not data or not isinstance(data, dict) or 'scenario' not in data:
        return None, None, (jsonify({'error': 'Scenario is required'}), 400)
    name = data['scenario']
    if not isinstance(name, str) or not name.strip():
        return None, None, (jsonify({'error': 'Scenario cannot be empty'}), 400)
    return data, load_scenario(resolve_scenario_path(name.strip())), None


@app.route('/api/health', methods=['GET'])
def health_check():
    """Health check endpoint"""
    return jsonify({
        'status': 'healthy',
        'timestamp': datetime.now().isoformat(),
        'service': 'Eco-Lane Planner Backend'
    })


@app.route('/api/scenarios', methods=['GET'])
def get_scenarios():
    """Names of the bundled scenarios"""
    try:
        return jsonify({'scenarios': list_scenarios()})
    except Exception as e:
        return jsonify({'error': f'Failed to list scenarios: {str(e)}'}), 500


@app.route('/api/plan', methods=['POST'])
def plan_endpoint():
    """Plan once from a scenario's initial state"""
    try:
        data, sc, error = _scenario_from_body()
        if error:
            return error
        kind = data.get('heuristic') or sc.planner.heuristic_kind
        if kind not in HEURISTIC_KINDS:
            return jsonify({'error': f'Heuristic must be one of {list(HEURISTIC_KINDS)}'}), 400

        result = plan_once(sc, kind)
        return jsonify({
            'scenario': sc.name,
            'heuristic': kind,
            'termination': result.termination.value,
            'failed': result.failed,
            'nodes_expanded': result.nodes_expanded,
            'planning_time': result.planning_time,
            'cost': result.trajectory.total_cost,
            'objective': _finite_or_none(result.objective),
            'segments': trajectory_rows(result.trajectory),
            'timestamp': datetime.now().isoformat()
        })

    except PlannerError as e:
        logger.warning(f"plan request rejected: {e}")
        return jsonify({'error': str(e)}), 400
    except Exception as e:
        logger.error(f"plan error: {str(e)}\n{traceback.format_exc()}")
        return jsonify({'error': f'Server error: {str(e)}'}), 500


@app.route('/api/heatmap', methods=['POST'])
def heatmap_endpoint():
    """Cost-to-go map of a scenario; infeasible states are null"""
    try:
        _, sc, error = _scenario_from_body()
        if error:
            return error
        cmap = scenario_heuristic(sc, 'dp').cmap
        return jsonify({
            'scenario': sc.name,
            's': [float(s) for s in cmap.s_axis],
            'v': [float(v) for v in cmap.v_axis],
            'values': [[_finite_or_none(x) for x in row] for row in cmap.values],
            'goal_s': cmap.goal_s,
            'terminal_v_set': list(cmap.terminal_v_set)
        })

    except PlannerError as e:
        logger.warning(f"heatmap request rejected: {e}")
        return jsonify({'error': str(e)}), 400
    except Exception as e:
        logger.error(f"heatmap error: {str(e)}\n{traceback.format_exc()}")
        return jsonify({'error': f'Server error: {str(e)}'}), 500


@app.errorhandler(404)
def not_found(error):
    return jsonify({'error': 'Endpoint not found'}), 404


@app.errorhandler(500)
def internal_error(error):
    return jsonify({'error': 'Internal server error'}), 500


def run_server():
    """Run the Flask server"""
    try:
        logger.info(f"Server running on http://{config.SERVER_HOST}:{config.SERVER_PORT}")
        app.run(
            host=config.SERVER_HOST,
            port=config.SERVER_PORT,
            debug=False,
            threaded=True
        )
    except Exception as e:
        logger.error(f"Failed to start server: {str(e)}")
        sys.exit(1)


if __name__ == '__main__':
    os.chdir(os.path.dirname(os.path.abspath(__file__)))
    run_server()
