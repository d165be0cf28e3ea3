"""JSON endpoints for FLOP counts, modeled latency and design exploration.

Every response is a {"status", "payload"} envelope: status is 'OK' with the
report as payload, or an error message with a null payload.
"""

from functools import wraps
import logging

from django.conf import settings
from django.core.exceptions import ValidationError
from django.http import JsonResponse
from django.views.decorators.http import require_safe

from arch_core.config import ArchConfig, validate_arch
from dse.explore import InfeasibleDesign, explore, select_vec_fac
from host_runtime.cli import DEFAULT_PE_NUM, DEFAULT_REUSE_FAC
from host_runtime.descriptors import (bundled_names, load_fpga,
                                      load_model)
from host_runtime.reports import exploration_report, flops_report
from host_runtime.runtime import Mode, RunOptions, run_inference


logger = logging.getLogger(__name__)


def _api_response(*, status, payload, status_code):
    result = JsonResponse({
        'status': status,
        'payload': payload
    })
    result.status_code = status_code
    return result


def success(payload):
    """Build a Response object for a successful API request."""
    return _api_response(status='OK', payload=payload, status_code=200)


def failure(message, code=400):
    """Build a Response object for an unsuccessful API request."""
    return _api_response(status=message, payload=None, status_code=code)


class BadRequest(Exception):
    def __init__(self, message, code=400):
        super().__init__(message)
        self.code = code


def _bundled_model(model_name):
    # only bundled descriptors are reachable, never arbitrary paths
    if model_name not in bundled_names(settings.MODELS_DIR):
        raise BadRequest('Unknown model', 404)
    return load_model(model_name)


def _fpga(request):
    name = request.GET.get('fpga', settings.DEFAULT_FPGA)
    if name not in bundled_names(settings.FPGA_DIR):
        raise BadRequest('Unknown fpga')
    return load_fpga(name)


def _check_parameters(request, allowed):
    if request.GET.keys() - allowed:
        raise BadRequest('Invalid request: unsupported parameters')


def _int_parameter(request, name, default):
    value = request.GET.get(name)
    if value is None:
        return default
    try:
        return int(value)
    except ValueError:
        raise BadRequest(f"Could not decode {name}") from None


def api_view(view):
    """Turn BadRequest and ValidationError into failure envelopes."""
    @require_safe
    @wraps(view)
    def wrapper(request, *args, **kwargs):
        try:
            return view(request, *args, **kwargs)
        except BadRequest as e:
            logger.info('Rejected %s: %s', request.get_full_path(), e)
            return failure(str(e), e.code)
        except ValidationError as e:
            return failure(f"Invalid request: {' '.join(e.messages)}")
        except InfeasibleDesign as e:
            return failure(str(e))
    return wrapper


@api_view
def serve_flops(request, model_name):
    """FLOPs of a bundled model, per layer and in total."""
    _check_parameters(request, set())
    return success(flops_report(_bundled_model(model_name)))


@api_view
def serve_latency(request, model_name):
    """Modeled per-layer latency of a bundled model.

    Query parameters: pe, vec, reuse, batch and fpga, all optional.
    """
    _check_parameters(request, {'pe', 'vec', 'reuse', 'batch', 'fpga'})
    model = _bundled_model(model_name)
    fpga = _fpga(request)
    cfg = validate_arch(ArchConfig(
        _int_parameter(request, 'pe', DEFAULT_PE_NUM),
        _int_parameter(request, 'vec', select_vec_fac(fpga)),
        _int_parameter(request, 'reuse', DEFAULT_REUSE_FAC)))
    opts = RunOptions(cfg, fpga, Mode.MODEL_ONLY,
                      _int_parameter(request, 'batch', 1))
    return success(run_inference(model, None, None, opts).as_dict())


@api_view
def serve_dse(request, model_name):
    """Design space exploration of a bundled model on a bundled board."""
    _check_parameters(request, {'fpga'})
    model = _bundled_model(model_name)
    fpga = _fpga(request)
    return success(exploration_report(model, fpga, explore(model, fpga)))
