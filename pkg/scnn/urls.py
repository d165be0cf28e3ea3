from django.urls import include, path

urlpatterns = [
    path('api/v0/', include('api_lib.urls')),
]
