from django.urls import path

from . import api_server

urlpatterns = [
    path('flops/<str:model_name>', api_server.serve_flops,
         name='flops-endpoint'),
    path('latency/<str:model_name>', api_server.serve_latency,
         name='latency-endpoint'),
    path('dse/<str:model_name>', api_server.serve_dse,
         name='dse-endpoint'),
]
