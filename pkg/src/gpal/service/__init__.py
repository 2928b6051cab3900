from gpal.service.app import create_app
from gpal.service.core import ApiError, CampaignStore, ServiceConfig

__all__ = ["create_app", "ApiError", "CampaignStore", "ServiceConfig"]
