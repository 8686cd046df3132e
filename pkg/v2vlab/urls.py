"""v2vlab URL Configuration"""
from django.contrib import admin
from django.urls import path, include


urlpatterns = [
    path('', include('sidelink.urls')),
    path('admin/', admin.site.urls),
]
