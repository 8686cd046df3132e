from django.urls import path
from . import views

urlpatterns = [
    path('', views.HomeView.as_view(), name='home'),
    path('runs/', views.RunListView.as_view(), name='run_list'),
    path('runs/<int:pk>/', views.RunDetailView.as_view(), name='run_detail'),
]
